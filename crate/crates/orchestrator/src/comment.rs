//! Review comment assembly. One thread per (file, rule), so a re-run
//! replaces rather than accumulates; every comment ends with the provenance
//! footer that ties it to a revision, a prompt, and a model version.

use grev_core::model::{ProvenanceRecord, Rule, Severity};
use grev_core::prompting::ReviewResponse;
use serde::{Deserialize, Serialize};

/// Stable thread identity: findings of one rule in one file share a thread.
pub fn thread_key(file: &str, rule_id: &str) -> String {
    format!("{file}:{rule_id}")
}

/// Filesystem-safe form of a thread key (used by the directory sink).
pub fn sanitize_thread_key(key: &str) -> String {
    key.chars()
        .map(|c| match c {
            '/' | '\\' => '_',
            ':' => '-',
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' => c,
            _ => '_',
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub pr: u64,
    pub thread_key: String,
    pub file: String,
    pub line_start: u32,
    pub line_end: u32,
    pub rule_id: String,
    pub severity: Severity,
    pub body_md: String,
    /// Unified diff proposed by the model, already contract-validated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<String>,
    pub provenance: ProvenanceRecord,
}

/// Markdown body: headline, model rationale and risk, numbered remediation
/// steps with their citations, optional patch, provenance footer.
pub fn render_comment_md(
    rule: &Rule,
    response: &ReviewResponse,
    provenance: &ProvenanceRecord,
) -> String {
    let mut md = format!(
        "**{}: {}** ({}) — `{}` lines {}\n\n{}\n\n**Risk:** {}\n",
        rule.id,
        rule.title,
        rule.severity,
        provenance.file,
        provenance.line_range,
        response.rationale.trim(),
        response.risk.trim(),
    );
    md.push_str("\n**Suggested steps:**\n");
    for (i, step) in response.remediation.iter().enumerate() {
        let cites = step
            .cited_lines
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        md.push_str(&format!("{}. {} (line {})\n", i + 1, step.description.trim(), cites));
    }
    if let Some(patch) = &response.patch {
        md.push_str("\n**Proposed patch:**\n```diff\n");
        md.push_str(patch.trim_end_matches('\n'));
        md.push_str("\n```\n");
    }
    md.push_str(&format!(
        "\n<sub>grounded: rule {} | commit {} | model {} | prompt {} | {}</sub>\n",
        provenance.rule_id,
        &provenance.commit_sha[..provenance.commit_sha.len().min(12)],
        provenance.model_version,
        &provenance.prompt_hash[..provenance.prompt_hash.len().min(12)],
        provenance.timestamp,
    ));
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use grev_core::model::LineSpan;
    use grev_core::prompting::RemediationStep;

    fn sample_provenance() -> ProvenanceRecord {
        ProvenanceRecord {
            commit_sha: "0123456789abcdef0123".into(),
            file: "legacy.c".into(),
            line_range: LineSpan::new(34, 34),
            rule_id: "MC-1".into(),
            model_version: "null".into(),
            prompt_hash: "feedfacefeedfacefeed".into(),
            timestamp: "2026-01-02T03:04:05Z".into(),
        }
    }

    #[test]
    fn body_contains_all_sections_and_footer() {
        let rule = Rule {
            id: "MC-1".into(),
            title: "goto statement".into(),
            rationale: "r".into(),
            severity: Severity::High,
        };
        let response = ReviewResponse {
            rationale: "Jump into cleanup obscures flow.".into(),
            risk: "medium".into(),
            remediation: vec![RemediationStep {
                description: "replace the jump with a loop".into(),
                cited_lines: vec![34],
            }],
            patch: Some("--- a/legacy.c\n+++ b/legacy.c\n@@ -34,1 +34,1 @@\n-        goto again;\n+        continue;\n".into()),
            model_version: "null".into(),
        };
        let md = render_comment_md(&rule, &response, &sample_provenance());
        assert!(md.starts_with("**MC-1: goto statement** (High)"));
        assert!(md.contains("**Risk:** medium"));
        assert!(md.contains("1. replace the jump with a loop (line 34)"));
        assert!(md.contains("```diff\n--- a/legacy.c"));
        assert!(md.contains("<sub>grounded: rule MC-1 | commit 0123456789ab | model null | prompt feedfacefeed | 2026-01-02T03:04:05Z</sub>"));
    }

    #[test]
    fn thread_keys_sanitize_for_paths() {
        let key = thread_key("src/net/conn.c", "MC-5");
        assert_eq!(key, "src/net/conn.c:MC-5");
        assert_eq!(sanitize_thread_key(&key), "src_net_conn.c-MC-5");
    }
}
