//! Violation-centered context extraction.
//!
//! Given a finding, build the smallest slice of source that lets a reviewer
//! (human or model) judge it, under a token budget:
//!
//! 1. the violation lines themselves are always present, whatever the
//!    budget;
//! 2. if the enclosing function body fits, include it, with comment runs of
//!    two or more lines collapsed into an elision marker (the comment line
//!    immediately above the violation is load-bearing and kept);
//! 3. if there is still room, name the callers and callees of the enclosing
//!    function (capped, alphabetical);
//! 4. otherwise fall back to a +/-k line window around the violation,
//!    shrinking k until the budget holds.
//!
//! Comment elision is decided once per file from maximal comment runs, not
//! per tier, and the window tier never reaches outside the enclosing
//! function when one exists: both choices keep the rendered line set
//! monotone in the budget (a bigger budget can only add lines).
//!
//! Token cost is estimated as ceil(bytes / 4) of the rendered slice, which
//! tracks how LLM tokenizers behave on source code closely enough for
//! budgeting.

use crate::lex::{self, LineKind};
use crate::model::LineSpan;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

// === call graph ===

/// Function definitions and call edges across a tree, from the lexical
/// scanner. Duplicate definition names keep the first (sorted-path) entry;
/// call targets that resolve to no definition are marked external.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    /// function name -> (file, definition span)
    pub defs: BTreeMap<String, (String, LineSpan)>,
    /// caller name -> callee names
    pub calls: BTreeMap<String, BTreeSet<String>>,
    /// call targets with no definition in the tree
    pub external: BTreeSet<String>,
    /// file -> definitions in that file, in source order
    pub per_file: BTreeMap<String, Vec<(String, LineSpan)>>,
}

impl CallGraph {
    pub fn enclosing_function(&self, file: &str, line: u32) -> Option<(&str, LineSpan)> {
        self.per_file
            .get(file)?
            .iter()
            .find(|(_, span)| span.contains(line))
            .map(|(name, span)| (name.as_str(), *span))
    }

    pub fn callees_of(&self, name: &str) -> Vec<String> {
        self.calls.get(name).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }

    pub fn callers_of(&self, name: &str) -> Vec<String> {
        self.calls
            .iter()
            .filter(|(_, callees)| callees.contains(name))
            .map(|(caller, _)| caller.clone())
            .collect()
    }
}

pub fn build_call_graph(root: &Path) -> std::io::Result<CallGraph> {
    let mut graph = CallGraph::default();
    let mut bodies: Vec<(String, Vec<lex::Token>, (usize, usize))> = Vec::new();

    for rel in crate::fsutil::walk_files(root)? {
        let ext = rel.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !crate::analyzer::SOURCE_EXTENSIONS.contains(&ext) {
            continue;
        }
        let file = rel.to_string_lossy().replace('\\', "/");
        let text = match crate::fsutil::read_text_lf(&root.join(&rel)) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("call graph skipping {file}: {e}");
                continue;
            }
        };
        let toks = lex::tokenize(&text);
        let defs = lex::scan_functions(&toks);
        let mut file_defs = Vec::new();
        for d in &defs {
            file_defs.push((d.name.clone(), d.span()));
            if !graph.defs.contains_key(&d.name) {
                graph.defs.insert(d.name.clone(), (file.clone(), d.span()));
            }
            bodies.push((d.name.clone(), toks.clone(), d.body_tokens));
        }
        graph.per_file.insert(file, file_defs);
    }

    for (caller, toks, (from, to)) in &bodies {
        let entry = graph.calls.entry(caller.clone()).or_default();
        let mut k = *from;
        while k < *to {
            let t = &toks[k];
            if !t.pp
                && t.kind == lex::TokKind::Ident
                && !lex::is_keyword(&t.text)
                && k + 1 < *to
                && toks[k + 1].is_punct('(')
            {
                entry.insert(t.text.clone());
            }
            k += 1;
        }
    }

    let known: BTreeSet<String> = graph.defs.keys().cloned().collect();
    for callees in graph.calls.values() {
        for callee in callees {
            if !known.contains(callee) {
                graph.external.insert(callee.clone());
            }
        }
    }
    Ok(graph)
}

// === slices ===

pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub budget_tokens: usize,
    pub window_k: u32,
    pub max_names: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self { budget_tokens: 3000, window_k: 15, max_names: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineMarker {
    Violation,
    Body,
    Window,
    /// Stands in for omitted comment lines; `line_no` is the first omitted
    /// line and the text is the marker itself.
    Elision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceLine {
    pub line_no: u32,
    pub text: String,
    pub marker: LineMarker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSlice {
    pub file: String,
    pub violation: LineSpan,
    pub fn_name: Option<String>,
    pub callers: Vec<String>,
    pub callees: Vec<String>,
    pub lines: Vec<SliceLine>,
    /// ceil(bytes/4) of the rendered slice.
    pub token_estimate: usize,
    /// True when any tier was dropped or the window fallback was used.
    pub truncated: bool,
}

impl ContextSlice {
    /// Real source line numbers present in the slice (elision markers and
    /// their hidden lines excluded). Citations must stay inside this set.
    pub fn line_numbers(&self) -> BTreeSet<u32> {
        self.lines
            .iter()
            .filter(|l| l.marker != LineMarker::Elision)
            .map(|l| l.line_no)
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("context source missing file {file}")]
    MissingFile { file: String },
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

/// Render a slice to its canonical text form:
///
/// ```text
/// // file: src/a.c lines 12-12 fn handle_input
/// // callers: recv_loop
/// // callees: log_warn
///     10 | int n = frame_len(buf);
/// >>>  12 |     goto fail;
///     ..... | /* ... omitted 5 comment lines ... */
/// ```
pub fn render_slice(slice: &ContextSlice) -> String {
    let mut out = format!(
        "// file: {} lines {}-{} fn {}\n",
        slice.file,
        slice.violation.start,
        slice.violation.end,
        slice.fn_name.as_deref().unwrap_or("?")
    );
    if !slice.callers.is_empty() {
        out.push_str(&format!("// callers: {}\n", slice.callers.join(", ")));
    }
    if !slice.callees.is_empty() {
        out.push_str(&format!("// callees: {}\n", slice.callees.join(", ")));
    }
    for l in &slice.lines {
        match l.marker {
            LineMarker::Elision => out.push_str(&format!("    ..... | {}\n", l.text)),
            LineMarker::Violation => out.push_str(&format!(">>> {:>5} | {}\n", l.line_no, l.text)),
            _ => out.push_str(&format!("    {:>5} | {}\n", l.line_no, l.text)),
        }
    }
    out
}

/// Extract the context slice for a violation span in `file` under `root`.
pub fn extract_context(
    graph: &CallGraph,
    root: &Path,
    file: &str,
    violation: LineSpan,
    config: &ContextConfig,
) -> Result<ContextSlice, ContextError> {
    let path = root.join(file);
    if !path.exists() {
        return Err(ContextError::MissingFile { file: file.to_string() });
    }
    let text = crate::fsutil::read_text_lf(&path)
        .map_err(|e| ContextError::Io(file.to_string(), e.to_string()))?;
    Ok(extract_context_from_text(graph, file, &text, violation, config))
}

/// Same as [`extract_context`] but over in-memory text (used by tests and
/// property checks).
pub fn extract_context_from_text(
    graph: &CallGraph,
    file: &str,
    text: &str,
    violation: LineSpan,
    config: &ContextConfig,
) -> ContextSlice {
    let lines: Vec<&str> = crate::fsutil::split_lines(text);
    let n_lines = lines.len() as u32;
    let kinds = lex::classify_lines(text);

    let v_start = violation.start.min(n_lines.max(1));
    let v_end = violation.end.min(n_lines).max(v_start);
    let violation = LineSpan::new(v_start, v_end);

    // Elision plan: maximal comment runs of length >= 2, minus the line
    // immediately above the violation, decided once for the whole file.
    let is_comment = |line: u32| {
        line >= 1 && (line as usize) <= kinds.len() && kinds[line as usize - 1] == LineKind::Comment
    };
    let exempt = violation.start.checked_sub(1).filter(|&l| l >= 1 && is_comment(l));
    let mut elided: BTreeSet<u32> = BTreeSet::new();
    {
        let mut l = 1u32;
        while l <= n_lines {
            if is_comment(l) && !violation.contains(l) {
                let run_start = l;
                let mut run_end = l;
                while run_end + 1 <= n_lines && is_comment(run_end + 1) && !violation.contains(run_end + 1) {
                    run_end += 1;
                }
                // Split out the exempt line (always the run tail when present).
                let seg_end = match exempt {
                    Some(e) if e >= run_start && e <= run_end => e.saturating_sub(1),
                    _ => run_end,
                };
                if seg_end >= run_start && seg_end - run_start + 1 >= 2 {
                    for x in run_start..=seg_end {
                        elided.insert(x);
                    }
                }
                l = run_end + 1;
            } else {
                l += 1;
            }
        }
    }

    let enclosing = graph.enclosing_function(file, violation.start);
    let fn_name = enclosing.map(|(n, _)| n.to_string());
    let fn_span = enclosing.map(|(_, s)| s);

    let assemble = |range: LineSpan, marker: LineMarker| -> Vec<SliceLine> {
        let mut rows = Vec::new();
        let from = range.start.max(1);
        let to = range.end.min(n_lines);
        let mut l = from;
        while l <= to {
            if violation.contains(l) {
                rows.push(SliceLine {
                    line_no: l,
                    text: lines[l as usize - 1].to_string(),
                    marker: LineMarker::Violation,
                });
                l += 1;
            } else if elided.contains(&l) {
                let start = l;
                while l + 1 <= to && elided.contains(&(l + 1)) {
                    l += 1;
                }
                let count = l - start + 1;
                rows.push(SliceLine {
                    line_no: start,
                    text: format!("/* ... omitted {count} comment lines ... */"),
                    marker: LineMarker::Elision,
                });
                l += 1;
            } else {
                rows.push(SliceLine { line_no: l, text: lines[l as usize - 1].to_string(), marker });
                l += 1;
            }
        }
        rows
    };

    let names_for = |cap: usize| -> (Vec<String>, Vec<String>) {
        match &fn_name {
            Some(f) => {
                let mut callers = graph.callers_of(f);
                callers.truncate(cap);
                let mut callees = graph.callees_of(f);
                callees.truncate(cap);
                (callers, callees)
            }
            None => (Vec::new(), Vec::new()),
        }
    };

    let fits = |slice: &ContextSlice| estimate_tokens(&render_slice(slice)) <= config.budget_tokens;
    let finish = |mut slice: ContextSlice| -> ContextSlice {
        slice.token_estimate = estimate_tokens(&render_slice(&slice));
        slice
    };

    // Tier 2+3: whole enclosing function, with and without name lists.
    if let Some(span) = fn_span {
        let range = LineSpan::new(span.start.min(violation.start), span.end.max(violation.end));
        let body = assemble(range, LineMarker::Body);
        let (callers, callees) = names_for(config.max_names);
        let with_names = ContextSlice {
            file: file.to_string(),
            violation,
            fn_name: fn_name.clone(),
            callers,
            callees,
            lines: body.clone(),
            token_estimate: 0,
            truncated: false,
        };
        if fits(&with_names) {
            return finish(with_names);
        }
        let without_names = ContextSlice {
            callers: Vec::new(),
            callees: Vec::new(),
            truncated: true,
            ..with_names
        };
        if fits(&without_names) {
            return finish(without_names);
        }
    }

    // Tier 4: +/-k window (inside the enclosing function when one exists),
    // shrinking until the budget holds; k = 0 is the violation itself and is
    // used unconditionally.
    let mut k = config.window_k;
    loop {
        let mut from = violation.start.saturating_sub(k).max(1);
        let mut to = violation.end.saturating_add(k);
        if let Some(span) = fn_span {
            from = from.max(span.start);
            to = to.min(span.end.max(violation.end));
        }
        let candidate = ContextSlice {
            file: file.to_string(),
            violation,
            fn_name: fn_name.clone(),
            callers: Vec::new(),
            callees: Vec::new(),
            lines: assemble(LineSpan::new(from, to), LineMarker::Window),
            token_estimate: 0,
            truncated: true,
        };
        if k == 0 || fits(&candidate) {
            return finish(candidate);
        }
        k -= 1;
    }
}
