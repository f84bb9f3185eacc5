//! Core domain types: rules, findings, review hunks, provenance, and phase
//! timings, plus the normalized findings report format that every analyzer
//! integration speaks.
//!
//! Findings reports are JSON documents of the shape
//! `{"tool": "...", "version": "...", "findings": [...]}` where each finding
//! carries `rule_id`, `file`, `line_start`, `line_end`, `severity`,
//! `message`, and an optional `remediation`. Reports are UTF-8 and
//! LF-normalized on read; unknown fields are ignored so newer analyzers can
//! add detail without breaking older consumers.

use crate::diffing::DiffChunk;
use crate::hash::sha256_parts;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

// === severity and rules ===

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Low => write!(f, "Low"),
            Severity::Medium => write!(f, "Medium"),
            Severity::High => write!(f, "High"),
        }
    }
}

impl std::str::FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Low" => Ok(Severity::Low),
            "Medium" => Ok(Severity::Medium),
            "High" => Ok(Severity::High),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

/// A checkable rule: stable id, short title, reviewer-facing rationale, and
/// default severity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub title: String,
    pub rationale: String,
    pub severity: Severity,
}

// === line spans ===

/// Inclusive 1-based line range. `end < start` encodes the empty span (a
/// pure-deletion diff chunk has no new-side lines).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn empty_at(start: u32) -> Self {
        Self { start, end: start.saturating_sub(1) }
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn len(&self) -> u32 {
        if self.is_empty() {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn contains(&self, line: u32) -> bool {
        !self.is_empty() && self.start <= line && line <= self.end
    }

    pub fn intersects(&self, other: &LineSpan) -> bool {
        !self.is_empty() && !other.is_empty() && self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for LineSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

// === findings ===

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub file: String,
    pub line_start: u32,
    pub line_end: u32,
    pub severity: Severity,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remediation: Option<String>,
}

impl Finding {
    pub fn span(&self) -> LineSpan {
        LineSpan::new(self.line_start, self.line_end)
    }
}

/// The normalized findings document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingsReport {
    pub tool: String,
    pub version: String,
    pub findings: Vec<Finding>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FindingsError {
    /// The document is not valid JSON or not the expected top-level shape.
    #[error("malformed findings report: {0}")]
    MalformedReport(String),
    /// Record `index` exists but violates the schema.
    #[error("findings record {index}: {reason}")]
    SchemaViolation { index: usize, reason: String },
}

/// Parse and validate a findings report. Validation is per record so schema
/// errors always name the offending index; unknown fields are ignored.
pub fn parse_findings_report(bytes: &[u8]) -> Result<FindingsReport, FindingsError> {
    let text = String::from_utf8_lossy(bytes).replace("\r\n", "\n");
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| FindingsError::MalformedReport(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| FindingsError::MalformedReport("top level is not an object".into()))?;
    let tool = require_str(obj, "tool").map_err(FindingsError::MalformedReport)?;
    let version = require_str(obj, "version").map_err(FindingsError::MalformedReport)?;
    let records = obj
        .get("findings")
        .and_then(|v| v.as_array())
        .ok_or_else(|| FindingsError::MalformedReport("missing `findings` array".into()))?;

    let mut findings = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        findings.push(parse_record(rec).map_err(|reason| FindingsError::SchemaViolation {
            index,
            reason,
        })?);
    }
    Ok(FindingsReport { tool, version, findings })
}

fn require_str(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<String, String> {
    obj.get(key)
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| format!("missing or non-string `{key}`"))
}

fn parse_record(rec: &serde_json::Value) -> Result<Finding, String> {
    let obj = rec.as_object().ok_or("record is not an object")?;
    let rule_id = require_str(obj, "rule_id")?;
    if rule_id.is_empty() {
        return Err("empty `rule_id`".into());
    }
    let file = require_str(obj, "file")?;
    validate_rel_path(&file)?;
    let line_start = require_line(obj, "line_start")?;
    let line_end = require_line(obj, "line_end")?;
    if line_end < line_start {
        return Err(format!("line_end {line_end} precedes line_start {line_start}"));
    }
    let severity: Severity = require_str(obj, "severity")?.parse()?;
    let message = require_str(obj, "message")?;
    let remediation = match obj.get("remediation") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("non-string `remediation`".into()),
    };
    Ok(Finding { rule_id, file, line_start, line_end, severity, message, remediation })
}

fn require_line(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<u32, String> {
    let v = obj.get(key).ok_or_else(|| format!("missing `{key}`"))?;
    let n = v.as_i64().ok_or_else(|| format!("non-integer `{key}`"))?;
    if n < 1 {
        return Err(format!("`{key}` must be >= 1, got {n}"));
    }
    u32::try_from(n).map_err(|_| format!("`{key}` out of range: {n}"))
}

fn validate_rel_path(path: &str) -> Result<(), String> {
    if path.is_empty() {
        return Err("empty `file`".into());
    }
    if path.starts_with('/') || path.contains('\\') {
        return Err(format!("`file` must be a relative forward-slash path: {path:?}"));
    }
    if path.split('/').any(|seg| seg == "..") {
        return Err(format!("`file` must not traverse parents: {path:?}"));
    }
    Ok(())
}

/// Canonical serialization of a report (pretty JSON, fixed field order,
/// trailing newline). `parse_findings_report` of the output yields an equal
/// value.
pub fn serialize_findings_report(report: &FindingsReport) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

/// Keep only findings whose span intersects some diff chunk's new-side span
/// in the same file. Output is sorted by (file, line_start, rule_id); each
/// input finding appears at most once regardless of how many chunks it
/// touches.
pub fn filter_findings_to_diff(findings: &[Finding], chunks: &[DiffChunk]) -> Vec<Finding> {
    let mut spans: BTreeMap<&str, Vec<LineSpan>> = BTreeMap::new();
    for c in chunks {
        let span = c.new_span();
        if !span.is_empty() {
            spans.entry(c.file.as_str()).or_default().push(span);
        }
    }
    let mut kept: Vec<Finding> = findings
        .iter()
        .filter(|f| {
            spans
                .get(f.file.as_str())
                .is_some_and(|ss| ss.iter().any(|s| s.intersects(&f.span())))
        })
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        (a.file.as_str(), a.line_start, a.rule_id.as_str())
            .cmp(&(b.file.as_str(), b.line_start, b.rule_id.as_str()))
    });
    kept
}

// === hunks ===

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffStats {
    pub added: u32,
    pub removed: u32,
}

/// One reviewable unit: a diff chunk plus surrounding context and the
/// violation vectors observed before and after a candidate fix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub id: String,
    pub scenario_id: String,
    pub file: String,
    pub new_span: LineSpan,
    /// rule id -> count within `new_span` before any fix.
    pub pre_violations: BTreeMap<String, u32>,
    /// rule id -> count within `new_span` after the fix; empty until evaluated.
    pub post_violations: BTreeMap<String, u32>,
    pub diff_stats: DiffStats,
    pub context_slice: String,
}

impl Hunk {
    /// Stable content id over the identifying fields. Two hunks with equal
    /// (scenario, file, span, context) always share an id.
    pub fn compute_id(scenario_id: &str, file: &str, new_span: LineSpan, context_slice: &str) -> String {
        let span = format!("{}:{}", new_span.start, new_span.end);
        sha256_parts(&[
            scenario_id.as_bytes(),
            file.as_bytes(),
            span.as_bytes(),
            context_slice.as_bytes(),
        ])[..16]
            .to_string()
    }
}

// === provenance and timings ===

/// Everything needed to trace a posted comment back to its evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub commit_sha: String,
    pub file: String,
    pub line_range: LineSpan,
    pub rule_id: String,
    pub model_version: String,
    pub prompt_hash: String,
    /// RFC 3339 UTC timestamp.
    pub timestamp: String,
}

pub fn rfc3339_from_unix(secs: f64) -> String {
    let whole = secs.floor() as i64;
    let nanos = ((secs - whole as f64) * 1e9) as u32;
    chrono::DateTime::from_timestamp(whole, nanos)
        .unwrap_or_else(|| chrono::DateTime::from_timestamp(0, 0).unwrap())
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Wall-clock seconds spent in each pipeline phase for one finding or hunk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub context_s: f64,
    pub llm_s: f64,
    pub apply_s: f64,
    pub build_s: f64,
}

impl PhaseTimings {
    pub fn total_s(&self) -> f64 {
        self.context_s + self.llm_s + self.apply_s + self.build_s
    }

    /// Time until the author sees actionable feedback: generation plus the
    /// build/analysis that gates it.
    pub fn first_feedback_s(&self) -> f64 {
        self.llm_s + self.build_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> FindingsReport {
        FindingsReport {
            tool: "toy-analyzer".into(),
            version: "1.0".into(),
            findings: vec![Finding {
                rule_id: "MC-1".into(),
                file: "src/a.c".into(),
                line_start: 12,
                line_end: 12,
                severity: Severity::High,
                message: "goto used".into(),
                remediation: Some("restructure control flow".into()),
            }],
        }
    }

    #[test]
    fn report_round_trips() {
        let report = sample_report();
        let bytes = serialize_findings_report(&report);
        assert_eq!(parse_findings_report(&bytes).unwrap(), report);
    }

    #[test]
    fn schema_violation_names_record_index() {
        let raw = br#"{"tool":"t","version":"1","findings":[
            {"rule_id":"MC-1","file":"a.c","line_start":1,"line_end":1,"severity":"High","message":"ok"},
            {"rule_id":"MC-2","file":"a.c","line_start":0,"line_end":3,"severity":"Low","message":"bad line"}
        ]}"#;
        match parse_findings_report(raw) {
            Err(FindingsError::SchemaViolation { index, reason }) => {
                assert_eq!(index, 1);
                assert!(reason.contains("line_start"), "reason: {reason}");
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_malformed_report() {
        assert!(matches!(
            parse_findings_report(b"{not json"),
            Err(FindingsError::MalformedReport(_))
        ));
    }

    #[test]
    fn parent_traversal_is_rejected() {
        let raw = br#"{"tool":"t","version":"1","findings":[
            {"rule_id":"MC-1","file":"../etc/passwd","line_start":1,"line_end":1,"severity":"High","message":"m"}
        ]}"#;
        match parse_findings_report(raw) {
            Err(FindingsError::SchemaViolation { index: 0, reason }) => {
                assert!(reason.contains("traverse"), "reason: {reason}");
            }
            other => panic!("expected traversal rejection, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let raw = br#"{"tool":"t","version":"1","extra":true,"findings":[
            {"rule_id":"MC-1","file":"a.c","line_start":2,"line_end":2,"severity":"Low","message":"m","vendor":{"x":1}}
        ]}"#;
        let report = parse_findings_report(raw).unwrap();
        assert_eq!(report.findings.len(), 1);
    }

    #[test]
    fn span_intersection_table() {
        let s = LineSpan::new(10, 20);
        assert!(s.intersects(&LineSpan::new(20, 25)));
        assert!(s.intersects(&LineSpan::new(1, 10)));
        assert!(s.intersects(&LineSpan::new(12, 13)));
        assert!(!s.intersects(&LineSpan::new(21, 30)));
        assert!(!s.intersects(&LineSpan::empty_at(15)));
        assert!(LineSpan::empty_at(1).is_empty());
    }

    #[test]
    fn timings_arithmetic() {
        let t = PhaseTimings { context_s: 0.5, llm_s: 2.0, apply_s: 0.25, build_s: 1.25 };
        assert!((t.total_s() - 4.0).abs() < 1e-12);
        assert!((t.first_feedback_s() - 3.25).abs() < 1e-12);
    }

    #[test]
    fn hunk_id_is_stable_and_content_sensitive() {
        let a = Hunk::compute_id("s1", "a.c", LineSpan::new(3, 9), "ctx");
        assert_eq!(a, Hunk::compute_id("s1", "a.c", LineSpan::new(3, 9), "ctx"));
        assert_ne!(a, Hunk::compute_id("s1", "a.c", LineSpan::new(3, 9), "ctx2"));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn rfc3339_formats_utc() {
        assert_eq!(rfc3339_from_unix(0.0), "1970-01-01T00:00:00Z");
        assert_eq!(rfc3339_from_unix(1_700_000_000.0), "2023-11-14T22:13:20Z");
    }
}
