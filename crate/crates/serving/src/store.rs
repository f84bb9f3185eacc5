//! L2 job store: one JSON file per job, keyed by the job id (SHA-256 of the
//! full prompt text). Survives process restarts; writes are atomic.
//!
//! State machine per job: absent -> PENDING -> COMPLETE | ERROR. A COMPLETE
//! record is served forever (subject to nothing; prompts are content-hashed
//! so the answer cannot go stale). An ERROR record is terminal for waiters
//! of that attempt but re-runnable: the next fresh request for the same job
//! id starts a new attempt.

use crate::error::ServeError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Pending,
    Complete,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub j_id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ServeError>,
    pub created_s: f64,
    pub updated_s: f64,
    pub attempts: u32,
}

/// Outcome of [`FsJobStore::claim`].
#[derive(Debug, Clone, PartialEq)]
pub enum Claim {
    /// The job is ours to run (record now PENDING).
    Run(JobRecord),
    /// Someone already finished it; serve the stored result.
    AlreadyComplete(JobRecord),
}

pub struct FsJobStore {
    dir: PathBuf,
}

impl FsJobStore {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, j_id: &str) -> PathBuf {
        self.dir.join(format!("{j_id}.json"))
    }

    pub fn load(&self, j_id: &str) -> Option<JobRecord> {
        let bytes = std::fs::read(self.path(j_id)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("job store: dropping unreadable record {j_id}: {e}");
                None
            }
        }
    }

    pub fn save(&self, record: &JobRecord) -> std::io::Result<()> {
        let json = serde_json::to_vec(record)?;
        grev_core::fsutil::atomic_write(&self.path(&record.j_id), &json)
    }

    /// Claim the job: create or reset the record to PENDING, bumping the
    /// attempt counter. Used both for fresh jobs and for takeover of stale
    /// PENDING records.
    pub fn mark_pending(&self, j_id: &str, now_s: f64) -> std::io::Result<JobRecord> {
        let record = match self.load(j_id) {
            Some(mut r) => {
                r.state = JobState::Pending;
                r.result = None;
                r.error = None;
                r.updated_s = now_s;
                r.attempts += 1;
                r
            }
            None => JobRecord {
                j_id: j_id.to_string(),
                state: JobState::Pending,
                result: None,
                error: None,
                created_s: now_s,
                updated_s: now_s,
                attempts: 1,
            },
        };
        self.save(&record)?;
        Ok(record)
    }

    /// Claim the job for execution, unless it already completed. Unlike
    /// [`mark_pending`](Self::mark_pending) this never demotes a COMPLETE
    /// record, so a late claimer cannot erase a finished result.
    pub fn claim(&self, j_id: &str, now_s: f64) -> std::io::Result<Claim> {
        match self.load(j_id) {
            Some(r) if r.state == JobState::Complete => Ok(Claim::AlreadyComplete(r)),
            _ => Ok(Claim::Run(self.mark_pending(j_id, now_s)?)),
        }
    }

    pub fn complete(&self, j_id: &str, result: String, now_s: f64) -> std::io::Result<()> {
        if let Some(mut r) = self.load(j_id) {
            r.state = JobState::Complete;
            r.result = Some(result);
            r.error = None;
            r.updated_s = now_s;
            self.save(&r)?;
        }
        Ok(())
    }

    pub fn fail(&self, j_id: &str, error: ServeError, now_s: f64) -> std::io::Result<()> {
        if let Some(mut r) = self.load(j_id) {
            r.state = JobState::Error;
            r.result = None;
            r.error = Some(error);
            r.updated_s = now_s;
            self.save(&r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_survive_a_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = FsJobStore::new(dir.path()).unwrap();
            store.mark_pending("j1", 10.0).unwrap();
            store.complete("j1", "answer".into(), 11.0).unwrap();
        }
        let store = FsJobStore::new(dir.path()).unwrap();
        let r = store.load("j1").unwrap();
        assert_eq!(r.state, JobState::Complete);
        assert_eq!(r.result.as_deref(), Some("answer"));
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn error_then_retry_bumps_attempts() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsJobStore::new(dir.path()).unwrap();
        store.mark_pending("j", 1.0).unwrap();
        store.fail("j", ServeError::Backend { detail: "boom".into() }, 2.0).unwrap();
        assert_eq!(store.load("j").unwrap().state, JobState::Error);
        let again = store.mark_pending("j", 3.0).unwrap();
        assert_eq!(again.attempts, 2);
        assert_eq!(again.state, JobState::Pending);
        assert!(again.error.is_none());
    }

    #[test]
    fn state_serializes_screaming() {
        let r = JobRecord {
            j_id: "x".into(),
            state: JobState::Pending,
            result: None,
            error: None,
            created_s: 0.0,
            updated_s: 0.0,
            attempts: 1,
        };
        assert!(serde_json::to_string(&r).unwrap().contains(r#""state":"PENDING""#));
    }
}
