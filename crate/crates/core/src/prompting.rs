//! Grounded prompt assembly and response contract enforcement.
//!
//! Every generation request is built from a static analysis finding plus its
//! context slice, so the model never sees (or invents) code outside the
//! snippet. The prompt is rendered deterministically: same finding, same
//! slice, same templates => byte-identical text, and `prompt_hash` (SHA-256
//! of that text) is the cache/dedup key used across the serving stack.
//!
//! Responses must satisfy a strict output contract; anything that fails it
//! is rejected and the pipeline falls back to posting nothing rather than an
//! ungrounded comment.

use crate::context::ContextSlice;
use crate::hash::sha256_hex;
use crate::model::{Finding, Rule};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

pub const PLACEHOLDERS: [&str; 6] =
    ["{{role}}", "{{rationale}}", "{{metadata}}", "{{snippet}}", "{{contract}}", "{{guardrails}}"];

const BUILTIN_LAYOUT: &str = "\
## Role\n{{role}}\n\n\
## Rule\n{{rationale}}\n\n\
## Finding\n{{metadata}}\n\n\
## Snippet\n{{snippet}}\n\
## Output contract\n{{contract}}\n\n\
## Guardrails\n{{guardrails}}\n";

const BUILTIN_ROLE: &str = "\
You are a code reviewer for a C codebase. A static analyzer already located \
a concrete rule violation; your job is to explain the risk at this exact \
location and propose a remediation. Do not speculate about code you cannot \
see.";

const BUILTIN_CONTRACT: &str = "\
Reply with a single JSON object and nothing else:\n\
{\n\
  \"rationale\": string,       // why this occurrence is a problem here\n\
  \"risk\": string,            // concrete failure mode if left as-is\n\
  \"remediation\": [           // at least one step\n\
    { \"description\": string, \"cited_lines\": [int, ...] }\n\
  ],\n\
  \"patch\": string | null,    // optional unified diff\n\
  \"model_version\": string\n\
}";

const BUILTIN_GUARDRAILS: &str = "\
Every remediation step must cite at least one snippet line number from the \
allowed set below. Do not cite elided lines. A patch, if offered, may only \
touch the file named in the finding.\n\
Allowed citation lines: {{lines}}\n\
Patchable file: {{file}}";

/// Text templates for prompt assembly. `layout` must contain each of the six
/// section placeholders exactly once; `guardrails` must keep the dynamic
/// `{{lines}}` and `{{file}}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub layout: String,
    pub role: String,
    pub contract: String,
    pub guardrails: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template file {0}: {1}")]
    Io(String, String),
    #[error("template file {0} is not valid JSON: {1}")]
    Parse(String, String),
    #[error("layout is missing placeholder {0}")]
    MissingPlaceholder(String),
    #[error("guardrails template is missing slot {0}")]
    MissingSlot(String),
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            layout: BUILTIN_LAYOUT.to_string(),
            role: BUILTIN_ROLE.to_string(),
            contract: BUILTIN_CONTRACT.to_string(),
            guardrails: BUILTIN_GUARDRAILS.to_string(),
        }
    }

    /// Load overrides from a JSON file; absent keys keep the builtin text.
    pub fn from_file(path: &Path) -> Result<Self, TemplateError> {
        let name = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|e| TemplateError::Io(name.clone(), e.to_string()))?;
        #[derive(Deserialize)]
        struct Partial {
            layout: Option<String>,
            role: Option<String>,
            contract: Option<String>,
            guardrails: Option<String>,
        }
        let p: Partial = serde_json::from_slice(&bytes)
            .map_err(|e| TemplateError::Parse(name, e.to_string()))?;
        let builtin = Self::builtin();
        let t = Self {
            layout: p.layout.unwrap_or(builtin.layout),
            role: p.role.unwrap_or(builtin.role),
            contract: p.contract.unwrap_or(builtin.contract),
            guardrails: p.guardrails.unwrap_or(builtin.guardrails),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        for ph in PLACEHOLDERS {
            if self.layout.matches(ph).count() != 1 {
                return Err(TemplateError::MissingPlaceholder(ph.to_string()));
            }
        }
        for slot in ["{{lines}}", "{{file}}"] {
            if !self.guardrails.contains(slot) {
                return Err(TemplateError::MissingSlot(slot.to_string()));
            }
        }
        Ok(())
    }
}

/// A fully rendered prompt plus the grounding facts needed to validate the
/// response against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedPrompt {
    pub text: String,
    /// SHA-256 hex of `text`; the serving-side job identity.
    pub prompt_hash: String,
    pub rule_id: String,
    pub file: String,
    /// Real line numbers shown in the snippet; the citation whitelist.
    pub snippet_lines: BTreeSet<u32>,
}

/// Render the prompt for one finding. Deterministic; the text is canonical
/// LF with a trailing newline.
pub fn build_prompt(
    templates: &PromptTemplates,
    rule: &Rule,
    finding: &Finding,
    slice: &ContextSlice,
) -> GroundedPrompt {
    let snippet_lines = slice.line_numbers();
    let lines_list = snippet_lines
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(", ");

    let mut metadata = format!(
        "rule: {} ({})\nseverity: {}\nfile: {}\nlines: {}\nmessage: {}",
        rule.id,
        rule.title,
        finding.severity,
        finding.file,
        finding.span(),
        finding.message
    );
    if let Some(hint) = &finding.remediation {
        metadata.push_str(&format!("\nhint: {hint}"));
    }

    let rationale = format!("{}: {}", rule.title, rule.rationale);
    let guardrails = templates
        .guardrails
        .replace("{{lines}}", &lines_list)
        .replace("{{file}}", &finding.file);

    let text = templates
        .layout
        .replace("{{role}}", &templates.role)
        .replace("{{rationale}}", &rationale)
        .replace("{{metadata}}", &metadata)
        .replace("{{snippet}}", &crate::context::render_slice(slice))
        .replace("{{contract}}", &templates.contract)
        .replace("{{guardrails}}", &guardrails);
    let mut text = text.replace("\r\n", "\n");
    if !text.ends_with('\n') {
        text.push('\n');
    }

    GroundedPrompt {
        prompt_hash: sha256_hex(text.as_bytes()),
        text,
        rule_id: rule.id.clone(),
        file: finding.file.clone(),
        snippet_lines,
    }
}

// === response contract ===

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemediationStep {
    pub description: String,
    pub cited_lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewResponse {
    pub rationale: String,
    pub risk: String,
    pub remediation: Vec<RemediationStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<String>,
    pub model_version: String,
}

/// Ways a model response can break the output contract. The tag names are
/// stable and appear in audit events.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContractViolation {
    #[error("missing_section: {name}")]
    MissingSection { name: String },
    #[error("bad_citation: line {line} is not in the snippet")]
    BadCitation { line: u32 },
    #[error("foreign_file_patch: {file}")]
    ForeignFilePatch { file: String },
    #[error("unparsable: {detail}")]
    Unparsable { detail: String },
}

/// Parse and validate a raw model reply against the prompt it answers.
pub fn validate_response(
    raw: &str,
    prompt: &GroundedPrompt,
) -> Result<ReviewResponse, ContractViolation> {
    let value: serde_json::Value = serde_json::from_str(raw)
        .map_err(|e| ContractViolation::Unparsable { detail: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| ContractViolation::Unparsable { detail: "not a JSON object".into() })?;

    for name in ["rationale", "risk", "remediation", "model_version"] {
        let missing = match obj.get(name) {
            None | Some(serde_json::Value::Null) => true,
            Some(serde_json::Value::String(s)) => s.trim().is_empty(),
            Some(serde_json::Value::Array(a)) => a.is_empty(),
            Some(_) => false,
        };
        if missing {
            return Err(ContractViolation::MissingSection { name: name.to_string() });
        }
    }

    let resp: ReviewResponse = serde_json::from_value(value)
        .map_err(|e| ContractViolation::Unparsable { detail: e.to_string() })?;

    for (i, step) in resp.remediation.iter().enumerate() {
        if step.description.trim().is_empty() {
            return Err(ContractViolation::MissingSection {
                name: format!("remediation[{i}].description"),
            });
        }
        if step.cited_lines.is_empty() {
            return Err(ContractViolation::MissingSection {
                name: format!("remediation[{i}].cited_lines"),
            });
        }
        for &line in &step.cited_lines {
            if !prompt.snippet_lines.contains(&line) {
                return Err(ContractViolation::BadCitation { line });
            }
        }
    }

    if let Some(patch) = &resp.patch {
        let chunks = crate::diffing::parse_unified_diff(patch)
            .map_err(|e| ContractViolation::Unparsable { detail: format!("patch: {e}") })?;
        if chunks.is_empty() {
            return Err(ContractViolation::Unparsable { detail: "patch: no hunks".into() });
        }
        for c in &chunks {
            if c.file != prompt.file {
                return Err(ContractViolation::ForeignFilePatch { file: c.file.clone() });
            }
        }
    }

    Ok(resp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ContextConfig, extract_context_from_text, CallGraph};
    use crate::model::{LineSpan, Severity};

    fn fixture() -> (GroundedPrompt, PromptTemplates) {
        let rule = Rule {
            id: "MC-5".into(),
            title: "banned function".into(),
            severity: Severity::High,
            rationale: "these calls have no bounds checking".into(),
        };
        let finding = Finding {
            rule_id: "MC-5".into(),
            file: "src/legacy.c".into(),
            line_start: 2,
            line_end: 2,
            severity: Severity::High,
            message: "call to banned function strcpy".into(),
            remediation: None,
        };
        let text = "void f(char *d, const char *s) {\n    strcpy(d, s);\n}\n";
        let slice = extract_context_from_text(
            &CallGraph::default(),
            "src/legacy.c",
            text,
            LineSpan::new(2, 2),
            &ContextConfig::default(),
        );
        let templates = PromptTemplates::builtin();
        (build_prompt(&templates, &rule, &finding, &slice), templates)
    }

    fn good_reply() -> String {
        serde_json::json!({
            "rationale": "strcpy writes past the destination on long input",
            "risk": "stack corruption",
            "remediation": [
                {"description": "use a bounded copy", "cited_lines": [2]}
            ],
            "patch": null,
            "model_version": "test-1"
        })
        .to_string()
    }

    #[test]
    fn prompt_is_deterministic_and_fully_substituted() {
        let (a, _) = fixture();
        let (b, _) = fixture();
        assert_eq!(a, b);
        assert!(!a.text.contains("{{"), "unsubstituted placeholder:\n{}", a.text);
        assert!(a.text.ends_with('\n'));
        assert_eq!(a.prompt_hash, sha256_hex(a.text.as_bytes()));
        for heading in ["## Role", "## Rule", "## Finding", "## Snippet", "## Output contract", "## Guardrails"] {
            assert!(a.text.contains(heading), "missing {heading}");
        }
        assert!(a.text.contains("Allowed citation lines: 1, 2, 3"));
    }

    #[test]
    fn valid_response_round_trips() {
        let (p, _) = fixture();
        let r = validate_response(&good_reply(), &p).unwrap();
        assert_eq!(r.remediation.len(), 1);
        assert_eq!(r.model_version, "test-1");
    }

    #[test]
    fn missing_sections_are_named() {
        let (p, _) = fixture();
        for field in ["rationale", "risk", "remediation", "model_version"] {
            let mut v: serde_json::Value = serde_json::from_str(&good_reply()).unwrap();
            v.as_object_mut().unwrap().remove(field);
            match validate_response(&v.to_string(), &p) {
                Err(ContractViolation::MissingSection { name }) => assert_eq!(name, field),
                other => panic!("{field}: {other:?}"),
            }
        }
        let mut v: serde_json::Value = serde_json::from_str(&good_reply()).unwrap();
        v["remediation"][0]["cited_lines"] = serde_json::json!([]);
        assert!(matches!(
            validate_response(&v.to_string(), &p),
            Err(ContractViolation::MissingSection { name }) if name == "remediation[0].cited_lines"
        ));
    }

    #[test]
    fn citations_outside_snippet_are_rejected() {
        let (p, _) = fixture();
        let mut v: serde_json::Value = serde_json::from_str(&good_reply()).unwrap();
        v["remediation"][0]["cited_lines"] = serde_json::json!([2, 99]);
        assert_eq!(
            validate_response(&v.to_string(), &p),
            Err(ContractViolation::BadCitation { line: 99 })
        );
    }

    #[test]
    fn foreign_file_patch_is_rejected() {
        let (p, _) = fixture();
        let mut v: serde_json::Value = serde_json::from_str(&good_reply()).unwrap();
        v["patch"] = serde_json::json!(
            "--- a/other.c\n+++ b/other.c\n@@ -1,1 +1,1 @@\n-x\n+y\n"
        );
        assert_eq!(
            validate_response(&v.to_string(), &p),
            Err(ContractViolation::ForeignFilePatch { file: "other.c".into() })
        );
        v["patch"] = serde_json::json!("not a diff at all");
        assert!(matches!(
            validate_response(&v.to_string(), &p),
            Err(ContractViolation::Unparsable { .. })
        ));
    }

    #[test]
    fn garbage_is_unparsable() {
        let (p, _) = fixture();
        assert!(matches!(
            validate_response("model exploded", &p),
            Err(ContractViolation::Unparsable { .. })
        ));
    }

    #[test]
    fn layout_override_must_keep_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.json");
        std::fs::write(&path, r#"{"layout": "only {{role}} here"}"#).unwrap();
        assert!(matches!(
            PromptTemplates::from_file(&path),
            Err(TemplateError::MissingPlaceholder(_))
        ));
        std::fs::write(&path, r#"{"role": "terse reviewer"}"#).unwrap();
        let t = PromptTemplates::from_file(&path).unwrap();
        assert_eq!(t.role, "terse reviewer");
        assert_eq!(t.layout, PromptTemplates::builtin().layout);
    }
}
