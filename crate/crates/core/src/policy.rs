//! Deviation policy: reviewed, owned, time-boxed exceptions to rules.
//!
//! A deviation suppresses comments for one rule inside a scope (file glob,
//! optionally narrowed to a named function). Suppression is never silent:
//! callers record both the deviation application and the suppressed comment
//! in the audit log, so the exception stays visible even though the PR does
//! not get a comment.

use crate::context::CallGraph;
use crate::model::Finding;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEVIATIONS_FILE: &str = "deviations.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationScope {
    /// Glob over repo-relative paths; `*` matches any run of characters
    /// (including `/`), `?` matches exactly one.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    pub rule_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub scope: DeviationScope,
    pub rationale: String,
    pub owner: String,
    /// Last day (UTC) the deviation is in force, `YYYY-MM-DD`; absent means
    /// no expiry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("deviations file is malformed: {0}")]
    Malformed(String),
    #[error("deviation {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("io error reading deviations: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviationPolicy {
    pub deviations: Vec<Deviation>,
}

/// One suppressed finding, tied back to the deviation that claimed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suppression {
    pub finding: Finding,
    pub deviation_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyOutcome {
    pub kept: Vec<Finding>,
    pub suppressed: Vec<Suppression>,
}

impl DeviationPolicy {
    /// Load `deviations.json` from the tree root; an absent file is an empty
    /// policy, a present-but-invalid file is an error (fail closed on typos
    /// rather than silently enforcing nothing).
    pub fn load(root: &Path) -> Result<Self, PolicyError> {
        let path = root.join(DEVIATIONS_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let bytes = std::fs::read(&path)?;
        Self::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, PolicyError> {
        let deviations: Vec<Deviation> =
            serde_json::from_slice(bytes).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        for (index, d) in deviations.iter().enumerate() {
            let fail = |reason: &str| PolicyError::Invalid { index, reason: reason.to_string() };
            if d.scope.file.is_empty() {
                return Err(fail("scope.file is empty"));
            }
            if d.scope.rule_id.is_empty() {
                return Err(fail("scope.rule_id is empty"));
            }
            if d.rationale.trim().is_empty() {
                return Err(fail("rationale is required"));
            }
            if d.owner.trim().is_empty() {
                return Err(fail("owner is required"));
            }
            if let Some(expires) = &d.expires {
                parse_expiry(expires).ok_or_else(|| fail("expires is not a YYYY-MM-DD date"))?;
            }
        }
        Ok(Self { deviations })
    }

    /// Split findings into kept and suppressed at time `now_s` (unix
    /// seconds, UTC). The first matching deviation wins; partition is exact:
    /// every input finding lands in exactly one side.
    pub fn apply(&self, findings: Vec<Finding>, graph: &CallGraph, now_s: f64) -> PolicyOutcome {
        let today = chrono::DateTime::from_timestamp(now_s as i64, 0)
            .map(|dt| dt.date_naive())
            .unwrap_or(NaiveDate::MAX);
        let mut out = PolicyOutcome::default();
        'next: for finding in findings {
            for (i, d) in self.deviations.iter().enumerate() {
                if deviation_matches(d, &finding, graph, today) {
                    out.suppressed.push(Suppression { finding, deviation_index: i });
                    continue 'next;
                }
            }
            out.kept.push(finding);
        }
        out
    }
}

fn parse_expiry(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn deviation_matches(d: &Deviation, finding: &Finding, graph: &CallGraph, today: NaiveDate) -> bool {
    if d.scope.rule_id != finding.rule_id {
        return false;
    }
    if !glob_match(&d.scope.file, &finding.file) {
        return false;
    }
    if let Some(expires) = d.expires.as_deref().and_then(parse_expiry) {
        if today > expires {
            return false;
        }
    }
    if let Some(function) = &d.scope.function {
        match graph.enclosing_function(&finding.file, finding.line_start) {
            Some((name, _)) => name == function,
            None => false,
        }
    } else {
        true
    }
}

/// Minimal glob: `*` matches any (possibly empty) run of characters, `/`
/// included; `?` matches exactly one character; everything else is literal.
pub fn glob_match(pattern: &str, path: &str) -> bool {
    fn rec(p: &[char], s: &[char]) -> bool {
        match p.split_first() {
            None => s.is_empty(),
            Some(('*', rest)) => (0..=s.len()).any(|i| rec(rest, &s[i..])),
            Some(('?', rest)) => !s.is_empty() && rec(rest, &s[1..]),
            Some((c, rest)) => s.first() == Some(c) && rec(rest, &s[1..]),
        }
    }
    let p: Vec<char> = pattern.chars().collect();
    let s: Vec<char> = path.chars().collect();
    rec(&p, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Severity;

    fn finding(rule: &str, file: &str, line: u32) -> Finding {
        Finding {
            rule_id: rule.into(),
            file: file.into(),
            line_start: line,
            line_end: line,
            severity: Severity::Medium,
            message: "m".into(),
            remediation: None,
        }
    }

    fn dev(file: &str, rule: &str, function: Option<&str>, expires: Option<&str>) -> Deviation {
        Deviation {
            scope: DeviationScope {
                file: file.into(),
                function: function.map(String::from),
                rule_id: rule.into(),
            },
            rationale: "vendored code".into(),
            owner: "platform".into(),
            expires: expires.map(String::from),
        }
    }

    // day 19_000 = 2022-01-08
    const NOW: f64 = 19_000.0 * 86_400.0;

    #[test]
    fn glob_star_crosses_directories() {
        assert!(glob_match("src/*.c", "src/a.c"));
        assert!(glob_match("src/*.c", "src/deep/nested/a.c"));
        assert!(glob_match("*", "anything/at/all.c"));
        assert!(glob_match("src/?.c", "src/a.c"));
        assert!(!glob_match("src/?.c", "src/ab.c"));
        assert!(!glob_match("src/*.c", "lib/a.c"));
        assert!(glob_match("legacy.c", "legacy.c"));
        assert!(!glob_match("legacy.c", "src/legacy.c"));
    }

    #[test]
    fn partition_is_exact_and_first_match_wins() {
        let policy = DeviationPolicy {
            deviations: vec![dev("src/*", "MC-1", None, None), dev("*", "MC-1", None, None)],
        };
        let input = vec![
            finding("MC-1", "src/a.c", 3),
            finding("MC-1", "lib/b.c", 4),
            finding("MC-2", "src/a.c", 5),
        ];
        let out = policy.apply(input.clone(), &CallGraph::default(), NOW);
        assert_eq!(out.kept.len() + out.suppressed.len(), input.len());
        assert_eq!(out.kept, vec![finding("MC-2", "src/a.c", 5)]);
        assert_eq!(out.suppressed[0].deviation_index, 0);
        assert_eq!(out.suppressed[1].deviation_index, 1);
    }

    #[test]
    fn expiry_is_inclusive_of_the_last_day() {
        let policy =
            DeviationPolicy { deviations: vec![dev("*", "MC-1", None, Some("2022-01-08"))] };
        let f = vec![finding("MC-1", "a.c", 1)];
        let on_the_day = policy.apply(f.clone(), &CallGraph::default(), NOW);
        assert_eq!(on_the_day.suppressed.len(), 1);
        let after = policy.apply(f, &CallGraph::default(), NOW + 86_400.0);
        assert_eq!(after.suppressed.len(), 0, "expired the day after");
    }

    #[test]
    fn function_scope_uses_enclosing_function() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.c"),
            "void init(void) {\n    goto out;\nout:;\n}\nvoid work(void) {\n    goto out;\nout:;\n}\n",
        )
        .unwrap();
        let graph = crate::context::build_call_graph(dir.path()).unwrap();
        let policy = DeviationPolicy { deviations: vec![dev("a.c", "MC-1", Some("init"), None)] };
        let out = policy.apply(
            vec![finding("MC-1", "a.c", 2), finding("MC-1", "a.c", 6)],
            &graph,
            NOW,
        );
        assert_eq!(out.suppressed.len(), 1);
        assert_eq!(out.suppressed[0].finding.line_start, 2);
        assert_eq!(out.kept[0].line_start, 6);
    }

    #[test]
    fn invalid_records_fail_closed() {
        let missing_rationale =
            br#"[{"scope": {"file": "*", "rule_id": "MC-1"}, "rationale": " ", "owner": "x"}]"#;
        assert!(matches!(
            DeviationPolicy::parse(missing_rationale),
            Err(PolicyError::Invalid { index: 0, .. })
        ));
        let bad_date = br#"[{"scope": {"file": "*", "rule_id": "MC-1"}, "rationale": "r", "owner": "x", "expires": "soon"}]"#;
        assert!(matches!(
            DeviationPolicy::parse(bad_date),
            Err(PolicyError::Invalid { index: 0, .. })
        ));
        assert!(matches!(
            DeviationPolicy::parse(b"{"),
            Err(PolicyError::Malformed(_))
        ));
    }

    #[test]
    fn absent_file_is_an_empty_policy() {
        let dir = tempfile::tempdir().unwrap();
        let policy = DeviationPolicy::load(dir.path()).unwrap();
        assert!(policy.deviations.is_empty());
    }
}
