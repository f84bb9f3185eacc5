//! Where review output lands. The directory sink is the reference
//! implementation: one directory per PR, one subdirectory per comment
//! thread, numbered markdown comments inside, and `report.json` beside
//! them. A hosted-forge sink implements the same trait against a REST API.

use crate::comment::{sanitize_thread_key, ReviewComment};
use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};

pub trait CommentSink: Send {
    /// Append a comment to its thread, creating the thread if new.
    fn post(&mut self, comment: &ReviewComment) -> io::Result<()>;
    /// Thread keys currently present for a PR (raw keys, not sanitized).
    fn existing_threads(&self, pr: u64) -> io::Result<BTreeSet<String>>;
    /// Drop a whole thread; absent threads are fine.
    fn remove_thread(&mut self, pr: u64, thread_key: &str) -> io::Result<()>;
    /// Persist the run report for a PR.
    fn write_report(&mut self, pr: u64, report_json: &[u8]) -> io::Result<()>;
}

/// `<root>/pr-<n>/comments/<thread>/<seq>.md` plus `<root>/pr-<n>/report.json`.
/// Each thread directory keeps a `key` file holding the raw thread key so
/// listings can report unsanitized names.
pub struct FsSink {
    root: PathBuf,
}

impl FsSink {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    fn pr_dir(&self, pr: u64) -> PathBuf {
        self.root.join(format!("pr-{pr}"))
    }

    fn thread_dir(&self, pr: u64, thread_key: &str) -> PathBuf {
        self.pr_dir(pr).join("comments").join(sanitize_thread_key(thread_key))
    }
}

impl CommentSink for FsSink {
    fn post(&mut self, comment: &ReviewComment) -> io::Result<()> {
        let dir = self.thread_dir(comment.pr, &comment.thread_key);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("key"), comment.thread_key.as_bytes())?;
        let next = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()?
                    .strip_suffix(".md")?
                    .parse::<u32>()
                    .ok()
            })
            .max()
            .unwrap_or(0)
            + 1;
        grev_core::fsutil::atomic_write(&dir.join(format!("{next}.md")), comment.body_md.as_bytes())
    }

    fn existing_threads(&self, pr: u64) -> io::Result<BTreeSet<String>> {
        let dir = self.pr_dir(pr).join("comments");
        let mut keys = BTreeSet::new();
        if !dir.exists() {
            return Ok(keys);
        }
        for entry in std::fs::read_dir(&dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let key_file = entry.path().join("key");
            let key = match std::fs::read_to_string(&key_file) {
                Ok(k) => k,
                // A thread directory without its key file is unreadable
                // state; surface it under its sanitized name.
                Err(_) => entry.file_name().to_string_lossy().into_owned(),
            };
            keys.insert(key);
        }
        Ok(keys)
    }

    fn remove_thread(&mut self, pr: u64, thread_key: &str) -> io::Result<()> {
        let dir = self.thread_dir(pr, thread_key);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        Ok(())
    }

    fn write_report(&mut self, pr: u64, report_json: &[u8]) -> io::Result<()> {
        let dir = self.pr_dir(pr);
        std::fs::create_dir_all(&dir)?;
        grev_core::fsutil::atomic_write(&dir.join("report.json"), report_json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comment::thread_key;
    use grev_core::model::{LineSpan, ProvenanceRecord, Severity};

    fn comment(pr: u64, file: &str, rule: &str) -> ReviewComment {
        ReviewComment {
            pr,
            thread_key: thread_key(file, rule),
            file: file.into(),
            line_start: 3,
            line_end: 3,
            rule_id: rule.into(),
            severity: Severity::High,
            body_md: format!("body for {file} {rule}\n"),
            patch: None,
            provenance: ProvenanceRecord {
                commit_sha: "c".into(),
                file: file.into(),
                line_range: LineSpan::new(3, 3),
                rule_id: rule.into(),
                model_version: "null".into(),
                prompt_hash: "p".into(),
                timestamp: "2026-01-01T00:00:00Z".into(),
            },
        }
    }

    #[test]
    fn posts_number_sequentially_within_a_thread() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = FsSink::new(dir.path());
        sink.post(&comment(7, "a/b.c", "MC-1")).unwrap();
        sink.post(&comment(7, "a/b.c", "MC-1")).unwrap();
        sink.post(&comment(7, "a/b.c", "MC-5")).unwrap();
        let thread = dir.path().join("pr-7/comments/a_b.c-MC-1");
        assert!(thread.join("1.md").exists());
        assert!(thread.join("2.md").exists());
        assert_eq!(
            sink.existing_threads(7).unwrap(),
            BTreeSet::from(["a/b.c:MC-1".to_string(), "a/b.c:MC-5".to_string()])
        );
        assert!(sink.existing_threads(8).unwrap().is_empty());
    }

    #[test]
    fn remove_thread_deletes_and_tolerates_absence() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = FsSink::new(dir.path());
        sink.post(&comment(1, "x.c", "MC-2")).unwrap();
        sink.remove_thread(1, "x.c:MC-2").unwrap();
        sink.remove_thread(1, "x.c:MC-2").unwrap();
        assert!(sink.existing_threads(1).unwrap().is_empty());
    }

    #[test]
    fn report_written_at_pr_root() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = FsSink::new(dir.path());
        sink.write_report(3, b"{\"ok\":true}\n").unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("pr-3/report.json")).unwrap(),
            "{\"ok\":true}\n"
        );
    }
}
