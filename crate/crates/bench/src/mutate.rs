//! Fault-injection operators for benchmark generation. Each operator turns
//! a clean region of the corpus into a known rule violation with a purely
//! local, line-level edit, so the remediating inverse is the exact reverse
//! diff and never touches unrelated code.
//!
//! Sites are enumerated only inside functions with zero baseline findings;
//! a scenario built from them starts from a provably clean slate and every
//! violation in its hunks is one the generator injected.

use grev_core::analyzer::{analyze_file, AnalyzerConfig, RuleRegistry};
use grev_core::fsutil::{self, split_lines};
use grev_core::lex::{scan_functions, tokenize, FnDef, TokKind};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    InsertGoto,
    OctalizeLiteral,
    StripBraces,
    DeleteSwitchDefault,
    SwapSafeToBanned,
    InlineGrow,
}

impl MutationKind {
    pub const ALL: [MutationKind; 6] = [
        MutationKind::InsertGoto,
        MutationKind::OctalizeLiteral,
        MutationKind::StripBraces,
        MutationKind::DeleteSwitchDefault,
        MutationKind::SwapSafeToBanned,
        MutationKind::InlineGrow,
    ];

    /// The rule the injected defect is expected to trip.
    pub fn rule_targeted(self) -> &'static str {
        match self {
            MutationKind::InsertGoto => "MC-1",
            MutationKind::OctalizeLiteral => "MC-2",
            MutationKind::StripBraces => "MC-3",
            MutationKind::DeleteSwitchDefault => "MC-4",
            MutationKind::SwapSafeToBanned => "MC-5",
            MutationKind::InlineGrow => "MC-6",
        }
    }
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MutationKind::InsertGoto => "insert_goto",
            MutationKind::OctalizeLiteral => "octalize_literal",
            MutationKind::StripBraces => "strip_braces",
            MutationKind::DeleteSwitchDefault => "delete_switch_default",
            MutationKind::SwapSafeToBanned => "swap_safe_to_banned",
            MutationKind::InlineGrow => "inline_grow",
        };
        f.write_str(s)
    }
}

/// Manifest row: what was done where, and which rule it targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub file: String,
    pub line: u32,
    pub rule_targeted: String,
}

/// One 1-based inclusive line range replaced by new text. Every operator
/// reduces to a single splice, which keeps edits trivially invertible.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Splice {
    first: u32,
    last: u32,
    replacement: Vec<String>,
}

/// A concrete, applicable mutation in the unmutated corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationSite {
    pub kind: MutationKind,
    pub file: String,
    pub function: String,
    /// Anchor line in the original file (1-based).
    pub line: u32,
    splice: Splice,
}

impl MutationSite {
    pub fn manifest_row(&self) -> Mutation {
        Mutation {
            kind: self.kind,
            file: self.file.clone(),
            line: self.line,
            rule_targeted: self.kind.rule_targeted().to_string(),
        }
    }
}

/// Apply one site to the file text it was enumerated against.
pub fn apply_mutation(text: &str, site: &MutationSite) -> String {
    let lines = split_lines(text);
    let first = site.splice.first as usize - 1;
    let last = site.splice.last as usize; // exclusive
    assert!(first < last && last <= lines.len(), "splice out of range");
    let mut out: Vec<&str> = Vec::with_capacity(lines.len());
    out.extend(&lines[..first]);
    out.extend(site.splice.replacement.iter().map(String::as_str));
    out.extend(&lines[last..]);
    let mut joined = out.join("\n");
    joined.push('\n');
    joined
}

#[derive(Debug, thiserror::Error)]
pub enum MutateError {
    #[error("io error under {0}: {1}")]
    Io(String, String),
    #[error("corpus too small: {needed} mutation sites requested, {available} found")]
    CorpusTooSmall { needed: usize, available: usize },
}

/// Enumerate every applicable site in the corpus, in a canonical order:
/// files sorted, functions top to bottom, operators in declaration order,
/// occurrences by line. Only functions free of baseline findings qualify.
pub fn enumerate_sites(
    root: &Path,
    registry: &RuleRegistry,
    config: &AnalyzerConfig,
) -> Result<Vec<MutationSite>, MutateError> {
    let io_err = |e: std::io::Error| MutateError::Io(root.display().to_string(), e.to_string());
    let mut sites = Vec::new();
    for rel in fsutil::walk_files(root).map_err(io_err)? {
        if rel.extension().and_then(|e| e.to_str()) != Some("c") {
            continue;
        }
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        let text = fsutil::read_text_lf(&root.join(&rel)).map_err(io_err)?;
        let findings = analyze_file(&rel_str, &text, registry, config);
        let toks = tokenize(&text);
        let lines: Vec<&str> = split_lines(&text);
        for def in scan_functions(&toks) {
            let dirty = findings.iter().any(|f| f.span().intersects(&def.span()));
            if dirty || def.open_line >= def.close_line {
                continue;
            }
            collect_fn_sites(&rel_str, &def, &lines, &toks, config, &mut sites);
        }
    }
    Ok(sites)
}

fn collect_fn_sites(
    file: &str,
    def: &FnDef,
    lines: &[&str],
    toks: &[grev_core::lex::Token],
    config: &AnalyzerConfig,
    sites: &mut Vec<MutationSite>,
) {
    let line_at = |n: u32| lines[n as usize - 1];
    let site = |kind, line, splice| MutationSite {
        kind,
        file: file.to_string(),
        function: def.name.clone(),
        line,
        splice,
    };

    // insert_goto: a jump as the first body statement.
    sites.push(site(
        MutationKind::InsertGoto,
        def.open_line,
        Splice {
            first: def.open_line,
            last: def.open_line,
            replacement: vec![line_at(def.open_line).to_string(), "    goto done;".into()],
        },
    ));

    // octalize_literal: first plain decimal >= 8 in the body becomes its
    // 0-prefixed octal spelling, value preserved.
    let octal_target = toks.iter().find(|t| {
        t.kind == TokKind::Number
            && !t.pp
            && t.line > def.open_line
            && t.line < def.close_line
            && !t.text.starts_with('0')
            && t.text.chars().all(|c| c.is_ascii_digit())
            && t.text.parse::<u64>().map(|v| v >= 8).unwrap_or(false)
    });
    if let Some(t) = octal_target {
        let value: u64 = t.text.parse().expect("checked digits");
        if let Some(replaced) =
            replace_token_once(line_at(t.line), &t.text, &format!("0{value:o}"))
        {
            sites.push(site(
                MutationKind::OctalizeLiteral,
                t.line,
                Splice { first: t.line, last: t.line, replacement: vec![replaced] },
            ));
        }
    }

    // strip_braces: `kw (...) {` / single statement / `}` loses its braces.
    for i in (def.open_line + 1)..def.close_line.saturating_sub(1) {
        let head = line_at(i);
        let trimmed = head.trim();
        let Some(kw) = ["if", "while", "for"].iter().find(|k| {
            trimmed.strip_prefix(**k).is_some_and(|rest| rest.trim_start().starts_with('('))
        }) else {
            continue;
        };
        let _ = kw;
        if !trimmed.ends_with('{')
            || head.matches('(').count() != head.matches(')').count()
        {
            continue;
        }
        let stmt = line_at(i + 1).trim();
        let stmt_simple = stmt.ends_with(';')
            && !stmt.contains('{')
            && !stmt.contains('}')
            && !["if", "for", "while", "do", "switch"]
                .iter()
                .any(|k| stmt.starts_with(k) && !stmt.starts_with(&format!("{k}_")));
        let close = line_at(i + 2);
        if stmt_simple && close.trim() == "}" && indent_of(close) == indent_of(head) {
            let mut opened = head.trim_end().to_string();
            opened.truncate(opened.len() - 1);
            let opened = opened.trim_end().to_string();
            sites.push(site(
                MutationKind::StripBraces,
                i,
                Splice {
                    first: i,
                    last: i + 2,
                    replacement: vec![opened, line_at(i + 1).to_string()],
                },
            ));
        }
    }

    // delete_switch_default: the default arm (label plus up to three simple
    // statements, closed by the switch brace) collapses to one blank line.
    for i in (def.open_line + 1)..def.close_line {
        if line_at(i).trim() != "default:" {
            continue;
        }
        let mut last = i;
        while last + 1 < def.close_line && last - i < 3 {
            let next = line_at(last + 1).trim();
            if next.ends_with(';') && !next.contains('{') && !next.contains('}') {
                last += 1;
            } else {
                break;
            }
        }
        if last > i && line_at(last + 1).trim() == "}" {
            sites.push(site(
                MutationKind::DeleteSwitchDefault,
                i,
                Splice { first: i, last, replacement: vec![String::new()] },
            ));
        }
    }

    // swap_safe_to_banned: a bounded helper call becomes its classic unsafe
    // counterpart with the same effective arguments.
    for i in (def.open_line + 1)..def.close_line {
        let raw = line_at(i);
        let trimmed = raw.trim();
        let indent = indent_of(raw);
        let replacement = if trimmed.starts_with("copy_str(") && trimmed.ends_with(");") {
            call_args(trimmed, "copy_str").and_then(|args| {
                (args.len() == 3).then(|| format!("{indent}strcpy({}, {});", args[0], args[2]))
            })
        } else if trimmed.starts_with("format_len(") && trimmed.ends_with(");") {
            call_args(trimmed, "format_len").and_then(|args| {
                (args.len() == 4).then(|| {
                    format!("{indent}sprintf({}, \"%s=%d\", {}, {});", args[0], args[2], args[3])
                })
            })
        } else if trimmed.contains("= parse_num(")
            && trimmed.ends_with(");")
            && trimmed.matches("parse_num(").count() == 1
        {
            Some(raw.replacen("parse_num(", "atoi(", 1))
        } else {
            None
        };
        if let Some(text) = replacement {
            if config.banned_functions.iter().any(|b| text.contains(&format!("{b}("))) {
                sites.push(site(
                    MutationKind::SwapSafeToBanned,
                    i,
                    Splice { first: i, last: i, replacement: vec![text] },
                ));
            }
        }
    }

    // inline_grow: pad the body with no-ops until the function is one line
    // over the length limit.
    let pad = (config.max_function_lines + 1).saturating_sub(def.line_count());
    if pad > 0 {
        let mut replacement = vec!["    (void)0;".to_string(); pad as usize];
        replacement.push(line_at(def.close_line).to_string());
        sites.push(site(
            MutationKind::InlineGrow,
            def.close_line,
            Splice { first: def.close_line, last: def.close_line, replacement },
        ));
    }
}

fn indent_of(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Split `name(...)` arguments at top-level commas.
fn call_args(trimmed: &str, name: &str) -> Option<Vec<String>> {
    let inner = trimmed.strip_prefix(name)?.trim_start().strip_prefix('(')?.strip_suffix(");")?;
    let mut args = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for ch in inner.chars() {
        match ch {
            '(' | '[' => {
                depth += 1;
                current.push(ch);
            }
            ')' | ']' => {
                depth -= 1;
                current.push(ch);
            }
            ',' if depth == 0 => {
                args.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    if depth != 0 {
        return None;
    }
    args.push(current.trim().to_string());
    Some(args)
}

/// Replace the first standalone occurrence of `from` in `line` with `to`.
fn replace_token_once(line: &str, from: &str, to: &str) -> Option<String> {
    let bytes = line.as_bytes();
    let mut start = 0usize;
    while let Some(pos) = line[start..].find(from) {
        let at = start + pos;
        let end = at + from.len();
        let boundary = |b: Option<&u8>| {
            !matches!(b, Some(&c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'.')
        };
        if boundary(bytes.get(at.wrapping_sub(1)).filter(|_| at > 0))
            && boundary(bytes.get(end))
        {
            return Some(format!("{}{}{}", &line[..at], to, &line[end..]));
        }
        start = end;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use grev_core::diffing::diff_file;

    fn corpus() -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/mini")
    }

    fn all_sites() -> Vec<MutationSite> {
        let registry = RuleRegistry::builtin();
        let config = AnalyzerConfig::load(&corpus()).unwrap();
        enumerate_sites(&corpus(), &registry, &config).unwrap()
    }

    #[test]
    fn corpus_offers_every_operator_and_skips_dirty_functions() {
        let sites = all_sites();
        for kind in MutationKind::ALL {
            assert!(
                sites.iter().any(|s| s.kind == kind),
                "no site for {kind} in the corpus"
            );
        }
        assert!(
            sites.iter().all(|s| s.file != "legacy.c"),
            "legacy.c functions all carry baseline findings and must be skipped"
        );
    }

    #[test]
    fn every_site_injects_its_target_rule_in_one_hunk() {
        let registry = RuleRegistry::builtin();
        let config = AnalyzerConfig::load(&corpus()).unwrap();
        let sites = all_sites();
        assert!(sites.len() >= 20, "expected a rich site pool, got {}", sites.len());
        for s in &sites {
            let old = fsutil::read_text_lf(&corpus().join(&s.file)).unwrap();
            let new = apply_mutation(&old, s);
            let chunks = diff_file(&s.file, &old, &new, 3);
            assert_eq!(chunks.len(), 1, "{} at {}:{} must stay one chunk", s.kind, s.file, s.line);
            let span = chunks[0].new_span();
            let findings = analyze_file(&s.file, &new, &registry, &config);
            assert!(
                findings
                    .iter()
                    .any(|f| f.rule_id == s.kind.rule_targeted() && f.span().intersects(&span)),
                "{} at {}:{} did not raise {} inside the hunk",
                s.kind,
                s.file,
                s.line,
                s.kind.rule_targeted()
            );
        }
    }

    #[test]
    fn octalized_literals_preserve_their_value() {
        for s in all_sites().into_iter().filter(|s| s.kind == MutationKind::OctalizeLiteral) {
            let old = fsutil::read_text_lf(&corpus().join(&s.file)).unwrap();
            let old_line = split_lines(&old)[s.line as usize - 1];
            let new_line = &s.splice.replacement[0];
            // Extract the rewritten literal and check it reads back equal.
            let octal = new_line
                .split(|c: char| !(c.is_ascii_alphanumeric()))
                .find(|w| w.len() > 1 && w.starts_with('0') && !old_line.contains(*w))
                .unwrap_or_else(|| panic!("no octal literal in {new_line:?}"));
            let value = u64::from_str_radix(&octal[1..], 8).expect("valid octal");
            assert!(
                old_line.contains(&value.to_string()),
                "value {value} lost rewriting {old_line:?} -> {new_line:?}"
            );
        }
    }

    #[test]
    fn token_replacement_respects_boundaries() {
        assert_eq!(
            replace_token_once("x = 10 + 110;", "10", "012"),
            Some("x = 012 + 110;".to_string())
        );
        assert_eq!(replace_token_once("x = 110;", "10", "012"), None);
        assert_eq!(replace_token_once("v1.10 = 10;", "10", "012"), Some("v1.10 = 012;".into()));
    }

    #[test]
    fn grow_sites_land_exactly_one_line_over_the_limit() {
        let config = AnalyzerConfig::load(&corpus()).unwrap();
        for s in all_sites().into_iter().filter(|s| s.kind == MutationKind::InlineGrow) {
            let old = fsutil::read_text_lf(&corpus().join(&s.file)).unwrap();
            let new = apply_mutation(&old, &s);
            let toks = tokenize(&new);
            let grown = scan_functions(&toks)
                .into_iter()
                .find(|d| d.name == s.function)
                .expect("function survives the growth");
            assert_eq!(grown.line_count(), config.max_function_lines + 1, "{}", s.function);
        }
    }
}
