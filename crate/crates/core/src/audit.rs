//! Append-only audit log.
//!
//! Every externally visible pipeline outcome (comment posted, comment
//! suppressed by a deviation, generation failure, stale-comment cleanup) is
//! recorded here, so `posted + suppressed + failed` can always be reconciled
//! against the findings that entered the pipeline.
//!
//! On-disk format, one record per line:
//!
//! ```text
//! {len:08x} {sha8} {json}\n
//! ```
//!
//! `len` is the byte length of the JSON payload and `sha8` the first 8 hex
//! chars of its SHA-256. Records carry a sequence number assigned by the
//! log itself, strictly increasing within a file. Reopening tolerates a
//! torn tail (a crash mid-append): the longest valid prefix wins and the
//! tail is truncated away.

use crate::hash::sha256_hex;
use crate::model::rfc3339_from_unix;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    CommentPosted {
        pr: u64,
        thread_key: String,
        file: String,
        rule_id: String,
        line_start: u32,
        line_end: u32,
        prompt_hash: String,
        model_version: String,
    },
    CommentSuppressed {
        pr: u64,
        file: String,
        rule_id: String,
        line_start: u32,
        line_end: u32,
        owner: String,
    },
    DeviationApplied {
        pr: u64,
        file: String,
        rule_id: String,
        deviation_index: usize,
        owner: String,
        rationale: String,
    },
    GenerationFailed {
        pr: u64,
        file: String,
        rule_id: String,
        line_start: u32,
        line_end: u32,
        reason: String,
    },
    StaleCommentCleaned { pr: u64, thread_key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub ts: String,
    #[serde(flatten)]
    pub event: AuditEvent,
}

pub struct AuditLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl AuditLog {
    /// Open (or create) a log, recovering from a torn tail by truncating to
    /// the longest valid prefix.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = OpenOptions::new().create(true).read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, valid_len) = scan(&bytes);
        if valid_len != bytes.len() {
            log::warn!(
                "audit log {}: truncating {} corrupt trailing bytes",
                path.display(),
                bytes.len() - valid_len
            );
            file.set_len(valid_len as u64)?;
        }
        file.seek(SeekFrom::End(0))?;
        let next_seq = records.last().map(|r| r.seq + 1).unwrap_or(1);
        Ok(Self { path: path.to_path_buf(), file, next_seq })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one event; returns the sequence number it was assigned.
    pub fn append(&mut self, event: AuditEvent, now_s: f64) -> std::io::Result<u64> {
        let seq = self.next_seq;
        let record = AuditRecord { seq, ts: rfc3339_from_unix(now_s), event };
        let json = serde_json::to_string(&record)?;
        let line = format!("{:08x} {} {}\n", json.len(), &sha256_hex(json.as_bytes())[..8], json);
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.next_seq += 1;
        Ok(seq)
    }

    /// Read every valid record from a log file (empty if the file does not
    /// exist). Stops at the first corrupt record.
    pub fn read_all(path: &Path) -> std::io::Result<Vec<AuditRecord>> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let bytes = std::fs::read(path)?;
        Ok(scan(&bytes).0)
    }

    /// Records with `ts >= since` (RFC 3339 UTC compares lexicographically),
    /// or all records when `since` is `None`.
    pub fn export_since(path: &Path, since: Option<&str>) -> std::io::Result<Vec<AuditRecord>> {
        let records = Self::read_all(path)?;
        Ok(match since {
            Some(cut) => records.into_iter().filter(|r| r.ts.as_str() >= cut).collect(),
            None => records,
        })
    }
}

/// Parse the longest valid record prefix; returns records and how many bytes
/// they cover. Checksums, framing, and strictly increasing sequence numbers
/// are all enforced.
fn scan(bytes: &[u8]) -> (Vec<AuditRecord>, usize) {
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut last_seq = 0u64;
    loop {
        match parse_record(&bytes[offset..]) {
            Some((record, consumed)) if record.seq > last_seq => {
                last_seq = record.seq;
                records.push(record);
                offset += consumed;
            }
            _ => return (records, offset),
        }
    }
}

fn parse_record(bytes: &[u8]) -> Option<(AuditRecord, usize)> {
    // "{len:08x} {sha8} " is 18 bytes of header.
    if bytes.len() < 18 {
        return None;
    }
    let len_hex = std::str::from_utf8(&bytes[0..8]).ok()?;
    let len = usize::from_str_radix(len_hex, 16).ok()?;
    if bytes[8] != b' ' || bytes[17] != b' ' {
        return None;
    }
    let sha8 = &bytes[9..17];
    let total = 18 + len + 1;
    if bytes.len() < total || bytes[total - 1] != b'\n' {
        return None;
    }
    let json = &bytes[18..18 + len];
    if sha256_hex(json).as_bytes()[..8] != *sha8 {
        return None;
    }
    let record: AuditRecord = serde_json::from_slice(json).ok()?;
    Some((record, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posted(n: u32) -> AuditEvent {
        AuditEvent::CommentPosted {
            pr: 7,
            thread_key: format!("a.c:MC-1:{n}"),
            file: "a.c".into(),
            rule_id: "MC-1".into(),
            line_start: n,
            line_end: n,
            prompt_hash: "deadbeef".into(),
            model_version: "m1".into(),
        }
    }

    #[test]
    fn append_read_round_trip_with_increasing_seq() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut log = AuditLog::open(&path).unwrap();
        for i in 1..=5 {
            let seq = log.append(posted(i), 1_700_000_000.0 + i as f64).unwrap();
            assert_eq!(seq, i as u64);
        }
        let records = AuditLog::read_all(&path).unwrap();
        assert_eq!(records.len(), 5);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.seq, i as u64 + 1);
        }
        assert!(records.windows(2).all(|w| w[0].seq < w[1].seq));
    }

    #[test]
    fn reopen_continues_the_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        {
            let mut log = AuditLog::open(&path).unwrap();
            log.append(posted(1), 1.0).unwrap();
            log.append(posted(2), 2.0).unwrap();
        }
        let mut log = AuditLog::open(&path).unwrap();
        let seq = log.append(posted(3), 3.0).unwrap();
        assert_eq!(seq, 3);
        assert_eq!(AuditLog::read_all(&path).unwrap().len(), 3);
    }

    #[test]
    fn torn_tail_is_truncated_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        {
            let mut log = AuditLog::open(&path).unwrap();
            log.append(posted(1), 1.0).unwrap();
            log.append(posted(2), 2.0).unwrap();
        }
        // Simulate a crash mid-append: chop the last record in half.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let mut log = AuditLog::open(&path).unwrap();
        assert_eq!(AuditLog::read_all(&path).unwrap().len(), 1);
        let seq = log.append(posted(9), 3.0).unwrap();
        assert_eq!(seq, 2, "sequence resumes after the surviving prefix");
        let records = AuditLog::read_all(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].line_start(), 9);
    }

    #[test]
    fn corrupt_checksum_stops_the_scan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        {
            let mut log = AuditLog::open(&path).unwrap();
            log.append(posted(1), 1.0).unwrap();
            log.append(posted(2), 2.0).unwrap();
            log.append(posted(3), 3.0).unwrap();
        }
        let mut bytes = std::fs::read(&path).unwrap();
        // Flip a payload byte inside the second record.
        let second_start = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        bytes[second_start + 30] ^= 0x20;
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(AuditLog::read_all(&path).unwrap().len(), 1);
    }

    #[test]
    fn export_since_filters_by_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut log = AuditLog::open(&path).unwrap();
        log.append(posted(1), 1_000.0).unwrap();
        log.append(posted(2), 2_000_000.0).unwrap();
        let all = AuditLog::export_since(&path, None).unwrap();
        assert_eq!(all.len(), 2);
        let late = AuditLog::export_since(&path, Some("1970-01-02T00:00:00Z")).unwrap();
        assert_eq!(late.len(), 1);
        assert_eq!(late[0].seq, 2);
    }

    #[test]
    fn event_json_uses_stable_tags() {
        let record = AuditRecord { seq: 1, ts: "1970-01-01T00:00:01Z".into(), event: posted(4) };
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.contains(r#""event":"comment_posted""#), "{json}");
        let back: AuditRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }

    impl AuditRecord {
        fn line_start(&self) -> u32 {
            match &self.event {
                AuditEvent::CommentPosted { line_start, .. } => *line_start,
                _ => panic!("not a posted event"),
            }
        }
    }
}
