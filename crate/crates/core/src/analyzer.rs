//! Toy compliance analyzer for C-like trees.
//!
//! Six lexical rules in the spirit of embedded-C safety packs, checked on
//! the token stream from [`crate::lex`] (so comments and string literals can
//! never trigger findings):
//!
//! - `MC-1` goto statement (High)
//! - `MC-2` octal integer literal: leading `0`, length > 1, not `0x` (Medium)
//! - `MC-3` if/else/for/while body that is not a compound statement (Medium)
//! - `MC-4` switch without a default label (Medium)
//! - `MC-5` call to a banned function; default list `sprintf`, `strcpy`,
//!   `atoi`, configurable (High)
//! - `MC-6` function longer than the configured limit; default 120 lines,
//!   configurable (Low)
//!
//! `MC-4` findings span the whole switch statement and `MC-6` findings the
//! whole function definition, so any edit inside the construct intersects
//! the finding; the other rules anchor to a single line. Analysis is
//! per-file and files are visited in sorted order, so identical trees yield
//! byte-identical reports and editing one file can only change that file's
//! findings.

use crate::lex::{self, FnDef, TokKind, Token};
use crate::model::{Finding, FindingsReport, Hunk, LineSpan, Rule, Severity};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const SOURCE_EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "hpp"];

// === registry ===

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRegistry {
    pub standard_name: String,
    pub rules: BTreeMap<String, Rule>,
}

impl RuleRegistry {
    /// The built-in mini-C safety pack.
    pub fn builtin() -> Self {
        let mut rules = BTreeMap::new();
        let mut add = |id: &str, title: &str, rationale: &str, severity: Severity| {
            rules.insert(
                id.to_string(),
                Rule { id: id.into(), title: title.into(), rationale: rationale.into(), severity },
            );
        };
        add(
            "MC-1",
            "goto statement",
            "Unstructured jumps make control flow hard to follow and break static reasoning \
             about cleanup paths. Safety-oriented C standards confine goto to forward jumps \
             into a single cleanup section; this pack bans it outright.",
            Severity::High,
        );
        add(
            "MC-2",
            "octal integer literal",
            "A leading zero silently switches an integer literal to base 8, so 0755 reads as \
             seven hundred fifty-five but means 493. Write the decimal value, or hex notation \
             when the bit pattern is what matters.",
            Severity::Medium,
        );
        add(
            "MC-3",
            "non-compound control body",
            "A branch or loop whose body is a bare statement invites the next edit to land \
             silently outside the intended scope. Braces make the extent explicit.",
            Severity::Medium,
        );
        add(
            "MC-4",
            "switch without default",
            "A switch with no default label silently ignores unexpected values. An explicit \
             default documents the fallback and catches enum growth.",
            Severity::Medium,
        );
        add(
            "MC-5",
            "banned function call",
            "The project bans this function: it writes without bounds checking or parses \
             without error reporting. Use the bounded or error-returning alternative the \
             codebase provides.",
            Severity::High,
        );
        add(
            "MC-6",
            "overlong function",
            "Functions beyond the configured length limit are hard to review and test as a \
             unit. Extract cohesive steps into helpers.",
            Severity::Low,
        );
        Self { standard_name: "mini-c-safety".into(), rules }
    }

    pub fn severity_of(&self, rule_id: &str) -> Option<Severity> {
        self.rules.get(rule_id).map(|r| r.severity)
    }
}

// === configuration ===

pub const CONFIG_FILE: &str = "analyzer.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub banned_functions: Vec<String>,
    pub max_function_lines: u32,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            banned_functions: vec!["sprintf".into(), "strcpy".into(), "atoi".into()],
            max_function_lines: 120,
        }
    }
}

impl AnalyzerConfig {
    /// Repo-local override: `analyzer.json` in the tree root, defaults when
    /// absent.
    pub fn load(root: &Path) -> Result<Self, AnalyzerError> {
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let bytes = std::fs::read(&path).map_err(|e| AnalyzerError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| AnalyzerError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyzerError {
    #[error("analyzer config error: {0}")]
    Config(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

// === analysis runs ===

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRun {
    /// Tree snapshot hash (commit-SHA analog) the findings refer to.
    pub revision: String,
    pub duration_s: f64,
    pub findings: Vec<Finding>,
    /// Files that could not be read; analysis proceeds without them.
    pub skipped: Vec<String>,
}

impl AnalysisRun {
    pub fn to_report(&self) -> FindingsReport {
        FindingsReport {
            tool: "grev-analyzer".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            findings: self.findings.clone(),
        }
    }
}

/// Analyze every C-like source under `root` with the repo-local config.
pub fn analyze_tree(root: &Path, registry: &RuleRegistry) -> Result<AnalysisRun, AnalyzerError> {
    let config = AnalyzerConfig::load(root)?;
    analyze_tree_with(root, registry, &config)
}

pub fn analyze_tree_with(
    root: &Path,
    registry: &RuleRegistry,
    config: &AnalyzerConfig,
) -> Result<AnalysisRun, AnalyzerError> {
    let started = std::time::Instant::now();
    let files = crate::fsutil::walk_files(root)
        .map_err(|e| AnalyzerError::Io(root.display().to_string(), e.to_string()))?;
    let mut findings = Vec::new();
    let mut skipped = Vec::new();
    for rel in files {
        let ext = rel.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !SOURCE_EXTENSIONS.contains(&ext) {
            continue;
        }
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        match crate::fsutil::read_text_lf(&root.join(&rel)) {
            Ok(text) => findings.extend(analyze_file(&rel_str, &text, registry, config)),
            Err(e) => {
                log::warn!("skipping unreadable {rel_str}: {e}");
                skipped.push(rel_str);
            }
        }
    }
    findings.sort_by(|a, b| {
        (a.file.as_str(), a.line_start, a.rule_id.as_str())
            .cmp(&(b.file.as_str(), b.line_start, b.rule_id.as_str()))
    });
    let revision = crate::hash::tree_snapshot_sha(root)
        .map_err(|e| AnalyzerError::Io(root.display().to_string(), e.to_string()))?;
    Ok(AnalysisRun { revision, duration_s: started.elapsed().as_secs_f64(), findings, skipped })
}

/// Analyze one file's text. Pure; used directly by tests and the mutation
/// site enumerator.
pub fn analyze_file(
    file: &str,
    text: &str,
    registry: &RuleRegistry,
    config: &AnalyzerConfig,
) -> Vec<Finding> {
    let toks = lex::tokenize(text);
    let defs = lex::scan_functions(&toks);
    let mut out = Vec::new();

    let mut emit = |rule_id: &str, span: LineSpan, message: String, remediation: String| {
        if let Some(severity) = registry.severity_of(rule_id) {
            out.push(Finding {
                rule_id: rule_id.into(),
                file: file.into(),
                line_start: span.start,
                line_end: span.end,
                severity,
                message,
                remediation: Some(remediation),
            });
        }
    };

    check_goto(&toks, &mut emit);
    check_octal(&toks, &mut emit);
    check_compound_bodies(&toks, &mut emit);
    check_switch_default(&toks, &mut emit);
    check_banned_calls(&toks, config, &mut emit);
    check_function_length(&defs, config, &mut emit);

    out.sort_by(|a, b| (a.line_start, a.rule_id.as_str()).cmp(&(b.line_start, b.rule_id.as_str())));
    out
}

type Emit<'a> = dyn FnMut(&str, LineSpan, String, String) + 'a;

fn check_goto(toks: &[Token], emit: &mut Emit) {
    for t in toks {
        if !t.pp && t.is_ident("goto") {
            emit(
                "MC-1",
                LineSpan::new(t.line, t.line),
                "goto statement".into(),
                "restructure the control flow without goto".into(),
            );
        }
    }
}

fn is_octal_literal(text: &str) -> Option<u64> {
    let mut body = text;
    while let Some(stripped) = body.strip_suffix(|c: char| matches!(c, 'u' | 'U' | 'l' | 'L')) {
        body = stripped;
    }
    if body.len() < 2 || !body.starts_with('0') {
        return None;
    }
    let rest = &body[1..];
    if rest.starts_with('x') || rest.starts_with('X') {
        return None;
    }
    if !rest.chars().all(|c| c.is_ascii_digit()) {
        return None; // floats like 0.5, 0e1 fall out here
    }
    u64::from_str_radix(rest, 8).ok()
}

fn check_octal(toks: &[Token], emit: &mut Emit) {
    for t in toks {
        if t.pp || t.kind != TokKind::Number {
            continue;
        }
        if let Some(value) = is_octal_literal(&t.text) {
            emit(
                "MC-2",
                LineSpan::new(t.line, t.line),
                format!("octal integer literal {}", t.text),
                format!("write the value in decimal ({value})"),
            );
        }
    }
}

fn next_code_token(toks: &[Token], mut i: usize) -> Option<usize> {
    while i < toks.len() {
        if !toks[i].pp {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn check_compound_bodies(toks: &[Token], emit: &mut Emit) {
    for i in 0..toks.len() {
        let t = &toks[i];
        if t.pp || t.kind != TokKind::Ident {
            continue;
        }
        match t.text.as_str() {
            "if" | "for" | "while" => {
                // `} while (...)` is the tail of a do-while, not a loop head.
                if t.text == "while" && i > 0 && toks[i - 1].is_punct('}') {
                    continue;
                }
                let Some(open) = next_code_token(toks, i + 1).filter(|&k| toks[k].is_punct('(')) else {
                    continue;
                };
                let Some(close) = lex::match_forward(toks, open, '(', ')') else { continue };
                let Some(body) = next_code_token(toks, close + 1) else { continue };
                if !toks[body].is_punct('{') {
                    emit(
                        "MC-3",
                        LineSpan::new(t.line, t.line),
                        format!("{} body is not a compound statement", t.text),
                        "wrap the body in braces".into(),
                    );
                }
            }
            "else" => {
                let Some(body) = next_code_token(toks, i + 1) else { continue };
                if !toks[body].is_punct('{') && !toks[body].is_ident("if") {
                    emit(
                        "MC-3",
                        LineSpan::new(t.line, t.line),
                        "else body is not a compound statement".into(),
                        "wrap the body in braces".into(),
                    );
                }
            }
            _ => {}
        }
    }
}

fn check_switch_default(toks: &[Token], emit: &mut Emit) {
    for i in 0..toks.len() {
        let t = &toks[i];
        if t.pp || !t.is_ident("switch") {
            continue;
        }
        let Some(open_paren) = next_code_token(toks, i + 1).filter(|&k| toks[k].is_punct('(')) else {
            continue;
        };
        let Some(close_paren) = lex::match_forward(toks, open_paren, '(', ')') else { continue };
        let Some(open_brace) = next_code_token(toks, close_paren + 1).filter(|&k| toks[k].is_punct('{'))
        else {
            continue;
        };
        let Some(close_brace) = lex::match_forward(toks, open_brace, '{', '}') else { continue };

        // Scan the body for a `default:` belonging to THIS switch: nested
        // switch bodies are skipped wholesale.
        let mut k = open_brace + 1;
        let mut has_default = false;
        while k < close_brace {
            let tk = &toks[k];
            if tk.is_ident("switch") {
                let from = next_code_token(toks, k + 1)
                    .filter(|&p| toks[p].is_punct('('))
                    .and_then(|p| lex::match_forward(toks, p, '(', ')'))
                    .and_then(|p| next_code_token(toks, p + 1))
                    .filter(|&p| toks[p].is_punct('{'));
                if let Some(inner_open) = from {
                    if let Some(inner_close) = lex::match_forward(toks, inner_open, '{', '}') {
                        k = inner_close + 1;
                        continue;
                    }
                }
            }
            if tk.is_ident("default")
                && next_code_token(toks, k + 1).is_some_and(|p| toks[p].is_punct(':'))
            {
                has_default = true;
                break;
            }
            k += 1;
        }
        if !has_default {
            emit(
                "MC-4",
                LineSpan::new(t.line, toks[close_brace].line),
                "switch has no default label".into(),
                "add a default label handling unexpected values".into(),
            );
        }
    }
}

fn check_banned_calls(toks: &[Token], config: &AnalyzerConfig, emit: &mut Emit) {
    for i in 0..toks.len() {
        let t = &toks[i];
        // The one rule that also inspects preprocessor lines: banned calls
        // hide in macro bodies.
        if t.kind == TokKind::Ident
            && config.banned_functions.iter().any(|b| b == &t.text)
            && i + 1 < toks.len()
            && toks[i + 1].is_punct('(')
        {
            emit(
                "MC-5",
                LineSpan::new(t.line, t.line),
                format!("call to banned function {}", t.text),
                format!("replace {} with the project's bounded alternative", t.text),
            );
        }
    }
}

fn check_function_length(defs: &[FnDef], config: &AnalyzerConfig, emit: &mut Emit) {
    for d in defs {
        let lines = d.line_count();
        if lines > config.max_function_lines {
            emit(
                "MC-6",
                d.span(),
                format!(
                    "function {} is {lines} lines long (limit {})",
                    d.name, config.max_function_lines
                ),
                "extract cohesive steps into helper functions".into(),
            );
        }
    }
}

// === violation vectors ===

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkVectors {
    pub hunk_id: String,
    pub pre: BTreeMap<String, u32>,
    pub post: BTreeMap<String, u32>,
}

/// Per-hunk rule counts plus everything that landed outside every hunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationDeltas {
    pub per_hunk: Vec<HunkVectors>,
    pub out_of_scope_pre: BTreeMap<String, u32>,
    pub out_of_scope_post: BTreeMap<String, u32>,
}

/// Count findings by rule inside each hunk's new-side span, for the pre and
/// post finding sets. A finding intersecting several hunks is counted in
/// each (hunks from one scenario do not overlap in practice); findings
/// intersecting none are reported separately.
pub fn diff_violation_vectors(pre: &[Finding], post: &[Finding], hunks: &[Hunk]) -> ViolationDeltas {
    let mut per_hunk: Vec<HunkVectors> = hunks
        .iter()
        .map(|h| HunkVectors { hunk_id: h.id.clone(), pre: BTreeMap::new(), post: BTreeMap::new() })
        .collect();

    let mut place = |findings: &[Finding], select_post: bool, out_of_scope: &mut BTreeMap<String, u32>| {
        for f in findings {
            let mut in_scope = false;
            for (h, vec) in hunks.iter().zip(per_hunk.iter_mut()) {
                if h.file == f.file && h.new_span.intersects(&f.span()) {
                    let target = if select_post { &mut vec.post } else { &mut vec.pre };
                    *target.entry(f.rule_id.clone()).or_insert(0) += 1;
                    in_scope = true;
                }
            }
            if !in_scope {
                *out_of_scope.entry(f.rule_id.clone()).or_insert(0) += 1;
            }
        }
    };

    let mut out_pre = BTreeMap::new();
    let mut out_post = BTreeMap::new();
    place(pre, false, &mut out_pre);
    place(post, true, &mut out_post);
    ViolationDeltas { per_hunk, out_of_scope_pre: out_pre, out_of_scope_post: out_post }
}
