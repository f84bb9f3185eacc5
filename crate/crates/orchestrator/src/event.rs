//! Pull-request events: the JSON document the review endpoint ingests, and
//! the exactly-once index keyed by (repo, pr, head revision), so webhook
//! redeliveries and manual re-runs cannot double-post.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrEvent {
    pub repo: String,
    pub pr: u64,
    /// Snapshot hash of the base tree; verified against the configured base
    /// checkout when non-empty.
    #[serde(default)]
    pub base_sha: String,
    /// Snapshot hash of the PR tree; verified against the materialized
    /// workspace when non-empty, computed and recorded when empty.
    #[serde(default)]
    pub head_sha: String,
    #[serde(default)]
    pub author: String,
    /// Unified diff from base to head.
    pub diff: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EventError {
    #[error("event is not valid JSON: {0}")]
    Parse(String),
    #[error("event field {0} is missing or empty")]
    MissingField(&'static str),
    #[error("event diff does not parse: {0}")]
    BadDiff(String),
    #[error("event diff_path {0}: {1}")]
    DiffPath(String, String),
}

fn validate_event(event: &PrEvent) -> Result<(), EventError> {
    if event.repo.is_empty() {
        return Err(EventError::MissingField("repo"));
    }
    if event.pr == 0 {
        return Err(EventError::MissingField("pr"));
    }
    if event.diff.is_empty() {
        return Err(EventError::MissingField("diff"));
    }
    let chunks = grev_core::diffing::parse_unified_diff(&event.diff)
        .map_err(|e| EventError::BadDiff(e.to_string()))?;
    if chunks.is_empty() {
        return Err(EventError::BadDiff("diff contains no hunks".into()));
    }
    Ok(())
}

/// Parse and validate an event document. The diff must parse and contain at
/// least one hunk; an empty PR has nothing to review.
pub fn parse_event(bytes: &[u8]) -> Result<PrEvent, EventError> {
    let event: PrEvent =
        serde_json::from_slice(bytes).map_err(|e| EventError::Parse(e.to_string()))?;
    validate_event(&event)?;
    Ok(event)
}

#[derive(Deserialize)]
struct IntakeRepo {
    name: String,
    root: String,
}

#[derive(Deserialize)]
struct IntakeEvent {
    repo: IntakeRepo,
    pr_number: u64,
    #[serde(default)]
    base_sha: String,
    #[serde(default)]
    head_sha: String,
    #[serde(default)]
    author: String,
    #[serde(default)]
    diff: Option<String>,
    #[serde(default)]
    diff_path: Option<String>,
}

/// Parse the intake document used by the CLI and the HTTP endpoint: nested
/// repo identity (name plus base-tree root) and either an inline diff or a
/// path to one. Relative paths resolve against `dir`. Returns the validated
/// event and the repo root the review should check out from.
pub fn parse_intake(bytes: &[u8], dir: &Path) -> Result<(PrEvent, PathBuf), EventError> {
    let raw: IntakeEvent =
        serde_json::from_slice(bytes).map_err(|e| EventError::Parse(e.to_string()))?;
    if raw.repo.root.is_empty() {
        return Err(EventError::MissingField("repo.root"));
    }
    let diff = match (raw.diff, raw.diff_path) {
        (Some(d), _) if !d.is_empty() => d,
        (_, Some(p)) if !p.is_empty() => {
            let path = dir.join(&p);
            std::fs::read_to_string(&path)
                .map_err(|e| EventError::DiffPath(p.clone(), e.to_string()))?
        }
        _ => return Err(EventError::MissingField("diff")),
    };
    let event = PrEvent {
        repo: raw.repo.name,
        pr: raw.pr_number,
        base_sha: raw.base_sha,
        head_sha: raw.head_sha,
        author: raw.author,
        diff,
    };
    validate_event(&event)?;
    Ok((event, dir.join(raw.repo.root)))
}

/// Identity under which an event is processed at most once.
pub fn dedup_key(repo: &str, pr: u64, head_sha: &str) -> String {
    format!("{repo}#{pr}@{head_sha}")
}

/// Persistent set of processed dedup keys, one per line. Loading tolerates
/// a missing file; recording appends and flushes before returning.
#[derive(Debug)]
pub struct ProcessedIndex {
    path: PathBuf,
    seen: BTreeSet<String>,
}

impl ProcessedIndex {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let seen = if path.exists() {
            std::fs::read_to_string(path)?
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        } else {
            BTreeSet::new()
        };
        Ok(Self { path: path.to_path_buf(), seen })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.seen.contains(key)
    }

    pub fn record(&mut self, key: &str) -> std::io::Result<()> {
        if !self.seen.insert(key.to_string()) {
            return Ok(());
        }
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{key}")?;
        f.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIFF: &str = "--- a/f.c\n+++ b/f.c\n@@ -1,1 +1,1 @@\n-a\n+b\n";

    fn raw_event(diff: &str) -> Vec<u8> {
        serde_json::to_vec(&serde_json::json!({
            "repo": "relay", "pr": 4, "author": "dev", "diff": diff,
        }))
        .unwrap()
    }

    #[test]
    fn well_formed_event_parses() {
        let e = parse_event(&raw_event(DIFF)).unwrap();
        assert_eq!((e.repo.as_str(), e.pr), ("relay", 4));
        assert_eq!(e.head_sha, "", "absent head_sha defaults to empty");
    }

    #[test]
    fn empty_or_hunkless_diffs_are_rejected() {
        assert!(matches!(parse_event(&raw_event("")), Err(EventError::MissingField("diff"))));
        assert!(matches!(
            parse_event(&raw_event("diff --git a/x b/x\n")),
            Err(EventError::BadDiff(_))
        ));
        assert!(matches!(parse_event(b"{oops"), Err(EventError::Parse(_))));
    }

    #[test]
    fn intake_documents_resolve_roots_and_diff_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("change.diff"), DIFF).unwrap();
        std::fs::create_dir(dir.path().join("repo")).unwrap();

        let inline = serde_json::to_vec(&serde_json::json!({
            "repo": {"name": "relay", "root": "repo"},
            "pr_number": 9,
            "diff": DIFF,
        }))
        .unwrap();
        let (event, root) = parse_intake(&inline, dir.path()).unwrap();
        assert_eq!((event.repo.as_str(), event.pr), ("relay", 9));
        assert_eq!(root, dir.path().join("repo"));

        let by_path = serde_json::to_vec(&serde_json::json!({
            "repo": {"name": "relay", "root": dir.path().join("repo")},
            "pr_number": 10,
            "head_sha": "abc",
            "diff_path": "change.diff",
        }))
        .unwrap();
        let (event, root) = parse_intake(&by_path, dir.path()).unwrap();
        assert_eq!(event.diff, DIFF);
        assert_eq!(event.head_sha, "abc");
        assert_eq!(root, dir.path().join("repo"), "absolute roots pass through join");

        let missing = serde_json::to_vec(&serde_json::json!({
            "repo": {"name": "relay", "root": "repo"},
            "pr_number": 11,
            "diff_path": "nope.diff",
        }))
        .unwrap();
        assert!(matches!(parse_intake(&missing, dir.path()), Err(EventError::DiffPath(_, _))));
    }

    #[test]
    fn processed_index_survives_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("processed.log");
        let key = dedup_key("relay", 4, "abc123");
        {
            let mut idx = ProcessedIndex::load(&path).unwrap();
            assert!(!idx.contains(&key));
            idx.record(&key).unwrap();
            idx.record(&key).unwrap(); // idempotent
            assert!(idx.contains(&key));
        }
        let idx = ProcessedIndex::load(&path).unwrap();
        assert!(idx.contains(&key));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{key}\n"));
    }
}
