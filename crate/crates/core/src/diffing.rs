//! Unified-diff handling: parsing, canonical rendering, inversion,
//! generation (via the `similar` text-diff engine), workspace patch
//! application, and segmentation of a diff into reviewable hunks.
//!
//! Canonical diffs, as produced by [`render_unified_diff`], use `--- a/x` /
//! `+++ b/x` headers, explicit `,len` counts in every `@@` header, and no
//! trailing noise; `parse . render` is the identity on them. The parser also
//! accepts ordinary git/GNU output: extra metadata lines are skipped,
//! `a/`-style prefixes are stripped, omitted lengths default to 1, and
//! "no newline at end of file" markers are tolerated and ignored (the
//! pipeline keeps every tracked file LF-terminated).

use crate::model::{DiffStats, Finding, Hunk, LineSpan};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffLineKind {
    Context,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: DiffLineKind,
    /// 1-based position in the old file (None for added lines).
    pub old_no: Option<u32>,
    /// 1-based position in the new file (None for removed lines).
    pub new_no: Option<u32>,
    pub text: String,
}

/// One `@@` hunk of a unified diff against a single file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffChunk {
    pub file: String,
    /// Start line in the old file; 0 with `old_len == 0` means "insert at
    /// top of file", otherwise "insert after line `old_start`".
    pub old_start: u32,
    pub old_len: u32,
    pub new_start: u32,
    pub new_len: u32,
    pub lines: Vec<DiffLine>,
}

impl DiffChunk {
    /// New-side span covered by this chunk (empty for pure deletions).
    pub fn new_span(&self) -> LineSpan {
        if self.new_len == 0 {
            LineSpan::empty_at(self.new_start.max(1))
        } else {
            LineSpan::new(self.new_start, self.new_start + self.new_len - 1)
        }
    }

    /// Added lines as (new-file position, text).
    pub fn added_lines(&self) -> Vec<(u32, &str)> {
        self.lines
            .iter()
            .filter(|l| l.kind == DiffLineKind::Added)
            .map(|l| (l.new_no.unwrap_or(0), l.text.as_str()))
            .collect()
    }

    /// Removed lines as (old-file position, text).
    pub fn removed_lines(&self) -> Vec<(u32, &str)> {
        self.lines
            .iter()
            .filter(|l| l.kind == DiffLineKind::Removed)
            .map(|l| (l.old_no.unwrap_or(0), l.text.as_str()))
            .collect()
    }

    pub fn stats(&self) -> DiffStats {
        DiffStats {
            added: self.lines.iter().filter(|l| l.kind == DiffLineKind::Added).count() as u32,
            removed: self.lines.iter().filter(|l| l.kind == DiffLineKind::Removed).count() as u32,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed diff at line {line}: {reason}")]
    MalformedDiff { line: usize, reason: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PatchError {
    #[error("patch targets missing file {file}")]
    MissingFile { file: String },
    #[error("patch conflict in {file} at line {line}: expected {expected:?}, found {found:?}")]
    PatchConflict { file: String, line: u32, expected: String, found: String },
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

// === parsing ===

fn strip_prefix_path(raw: &str) -> String {
    let raw = raw.split('\t').next().unwrap_or(raw).trim();
    for p in ["a/", "b/"] {
        if let Some(rest) = raw.strip_prefix(p) {
            return rest.to_string();
        }
    }
    raw.to_string()
}

fn parse_hunk_header(line: &str) -> Option<(u32, u32, u32, u32)> {
    // @@ -<os>[,<ol>] +<ns>[,<nl>] @@ [trailer]
    let rest = line.strip_prefix("@@ -")?;
    let (old_part, rest) = rest.split_once(" +")?;
    let (new_part, _) = rest.split_once(" @@")?;
    let parse_pair = |part: &str| -> Option<(u32, u32)> {
        match part.split_once(',') {
            Some((s, l)) => Some((s.parse().ok()?, l.parse().ok()?)),
            None => Some((part.parse().ok()?, 1)),
        }
    };
    let (os, ol) = parse_pair(old_part)?;
    let (ns, nl) = parse_pair(new_part)?;
    Some((os, ol, ns, nl))
}

/// Parse a unified diff into chunks. Chunk line counts are validated against
/// the `@@` header; inconsistencies are `MalformedDiff`.
pub fn parse_unified_diff(text: &str) -> Result<Vec<DiffChunk>, DiffError> {
    let mut chunks = Vec::new();
    let mut old_file: Option<String> = None;
    let mut new_file: Option<String> = None;
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop(); // artifact of the trailing newline, not a blank diff line
    }
    let mut i = 0usize;

    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("--- ") {
            old_file = Some(strip_prefix_path(rest));
            i += 1;
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            new_file = Some(strip_prefix_path(rest));
            i += 1;
        } else if line.starts_with("@@") {
            let (os, ol, ns, nl) = parse_hunk_header(line).ok_or(DiffError::MalformedDiff {
                line: i + 1,
                reason: format!("bad hunk header {line:?}"),
            })?;
            let file = match (&new_file, &old_file) {
                (Some(n), _) if n != "/dev/null" => n.clone(),
                (_, Some(o)) if o != "/dev/null" => o.clone(),
                _ => {
                    return Err(DiffError::MalformedDiff {
                        line: i + 1,
                        reason: "hunk before any file header".into(),
                    })
                }
            };
            i += 1;
            let mut body = Vec::new();
            let (mut seen_old, mut seen_new) = (0u32, 0u32);
            let (mut old_no, mut new_no) = (os, ns);
            while i < lines.len() && (seen_old < ol || seen_new < nl) {
                let raw = lines[i];
                if raw.starts_with('\\') {
                    i += 1; // "\ No newline at end of file"
                    continue;
                }
                let (kind, text) = match raw.chars().next() {
                    Some(' ') => (DiffLineKind::Context, &raw[1..]),
                    Some('+') => (DiffLineKind::Added, &raw[1..]),
                    Some('-') => (DiffLineKind::Removed, &raw[1..]),
                    None if seen_old < ol || seen_new < nl => (DiffLineKind::Context, ""),
                    _ => {
                        return Err(DiffError::MalformedDiff {
                            line: i + 1,
                            reason: format!("unexpected line {raw:?} inside hunk"),
                        })
                    }
                };
                let (o, n) = match kind {
                    DiffLineKind::Context => {
                        let pair = (Some(old_no), Some(new_no));
                        old_no += 1;
                        new_no += 1;
                        seen_old += 1;
                        seen_new += 1;
                        pair
                    }
                    DiffLineKind::Added => {
                        let pair = (None, Some(new_no));
                        new_no += 1;
                        seen_new += 1;
                        pair
                    }
                    DiffLineKind::Removed => {
                        let pair = (Some(old_no), None);
                        old_no += 1;
                        seen_old += 1;
                        pair
                    }
                };
                body.push(DiffLine { kind, old_no: o, new_no: n, text: text.to_string() });
                i += 1;
            }
            if seen_old != ol || seen_new != nl {
                return Err(DiffError::MalformedDiff {
                    line: i,
                    reason: format!(
                        "hunk body has {seen_old}/{seen_new} lines, header says {ol}/{nl}"
                    ),
                });
            }
            chunks.push(DiffChunk { file, old_start: os, old_len: ol, new_start: ns, new_len: nl, lines: body });
        } else {
            // diff --git, index, mode, empty trailing line: skip.
            i += 1;
        }
    }
    Ok(chunks)
}

// === rendering ===

/// Canonical text form. Consecutive chunks of the same file share one header
/// pair; lengths are always explicit.
pub fn render_unified_diff(chunks: &[DiffChunk]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for c in chunks {
        if current != Some(c.file.as_str()) {
            out.push_str(&format!("--- a/{}\n+++ b/{}\n", c.file, c.file));
            current = Some(c.file.as_str());
        }
        out.push_str(&format!(
            "@@ -{},{} +{},{} @@\n",
            c.old_start, c.old_len, c.new_start, c.new_len
        ));
        for l in &c.lines {
            let prefix = match l.kind {
                DiffLineKind::Context => ' ',
                DiffLineKind::Added => '+',
                DiffLineKind::Removed => '-',
            };
            out.push(prefix);
            out.push_str(&l.text);
            out.push('\n');
        }
    }
    out
}

/// Swap the two sides of a diff. Within each edit run removals are emitted
/// before additions so the output is canonical.
pub fn invert_chunks(chunks: &[DiffChunk]) -> Vec<DiffChunk> {
    chunks
        .iter()
        .map(|c| {
            let mut lines: Vec<DiffLine> = Vec::with_capacity(c.lines.len());
            let mut run: Vec<DiffLine> = Vec::new();
            let flush = |run: &mut Vec<DiffLine>, lines: &mut Vec<DiffLine>| {
                lines.extend(run.iter().filter(|l| l.kind == DiffLineKind::Removed).cloned());
                lines.extend(run.iter().filter(|l| l.kind == DiffLineKind::Added).cloned());
                run.clear();
            };
            for l in &c.lines {
                let swapped = DiffLine {
                    kind: match l.kind {
                        DiffLineKind::Context => DiffLineKind::Context,
                        DiffLineKind::Added => DiffLineKind::Removed,
                        DiffLineKind::Removed => DiffLineKind::Added,
                    },
                    old_no: l.new_no,
                    new_no: l.old_no,
                    text: l.text.clone(),
                };
                if swapped.kind == DiffLineKind::Context {
                    flush(&mut run, &mut lines);
                    lines.push(swapped);
                } else {
                    run.push(swapped);
                }
            }
            flush(&mut run, &mut lines);
            DiffChunk {
                file: c.file.clone(),
                old_start: c.new_start,
                old_len: c.new_len,
                new_start: c.old_start,
                new_len: c.old_len,
                lines,
            }
        })
        .collect()
}

// === generation ===

/// Structured diff of one file's old and new text with `context` lines of
/// surrounding context per chunk.
pub fn diff_file(file: &str, old: &str, new: &str, context: usize) -> Vec<DiffChunk> {
    use similar::{ChangeTag, TextDiff};
    let diff = TextDiff::from_lines(old, new);
    let mut chunks = Vec::new();
    for group in diff.grouped_ops(context) {
        let mut lines = Vec::new();
        let (mut min_old, mut max_old): (Option<u32>, u32) = (None, 0);
        let (mut min_new, mut max_new): (Option<u32>, u32) = (None, 0);
        let mut old_count = 0u32;
        let mut new_count = 0u32;
        for op in &group {
            for change in diff.iter_changes(op) {
                let text = change.value().trim_end_matches('\n').to_string();
                let (kind, old_no, new_no) = match change.tag() {
                    ChangeTag::Equal => {
                        let o = change.old_index().map(|x| x as u32 + 1);
                        let n = change.new_index().map(|x| x as u32 + 1);
                        (DiffLineKind::Context, o, n)
                    }
                    ChangeTag::Delete => {
                        (DiffLineKind::Removed, change.old_index().map(|x| x as u32 + 1), None)
                    }
                    ChangeTag::Insert => {
                        (DiffLineKind::Added, None, change.new_index().map(|x| x as u32 + 1))
                    }
                };
                if let Some(o) = old_no {
                    min_old.get_or_insert(o);
                    max_old = max_old.max(o);
                    old_count += 1;
                }
                if let Some(n) = new_no {
                    min_new.get_or_insert(n);
                    max_new = max_new.max(n);
                    new_count += 1;
                }
                lines.push(DiffLine { kind, old_no, new_no, text });
            }
        }
        // Anchor for an empty side: the last line number before the group on
        // that side (0 at the top of the file).
        let old_anchor = group
            .first()
            .map(|op| op.old_range().start as u32)
            .unwrap_or(0);
        let new_anchor = group
            .first()
            .map(|op| op.new_range().start as u32)
            .unwrap_or(0);
        chunks.push(DiffChunk {
            file: file.to_string(),
            old_start: min_old.unwrap_or(old_anchor),
            old_len: old_count,
            new_start: min_new.unwrap_or(new_anchor),
            new_len: new_count,
            lines,
        });
    }
    chunks
}

/// Diff every file that differs between two trees (sorted by path).
pub fn diff_trees(old_root: &Path, new_root: &Path, context: usize) -> std::io::Result<Vec<DiffChunk>> {
    let mut files: Vec<_> = crate::fsutil::walk_files(old_root)?;
    for f in crate::fsutil::walk_files(new_root)? {
        if !files.contains(&f) {
            files.push(f);
        }
    }
    files.sort();
    let mut chunks = Vec::new();
    for rel in files {
        let old_text = match crate::fsutil::read_text_lf(&old_root.join(&rel)) {
            Ok(t) => t,
            Err(_) => String::new(),
        };
        let new_text = match crate::fsutil::read_text_lf(&new_root.join(&rel)) {
            Ok(t) => t,
            Err(_) => String::new(),
        };
        if old_text != new_text {
            chunks.extend(diff_file(&rel.to_string_lossy().replace('\\', "/"), &old_text, &new_text, context));
        }
    }
    Ok(chunks)
}

// === application ===

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub files: Vec<String>,
    pub added: u32,
    pub removed: u32,
}

/// Apply chunks to a workspace, all-or-nothing: every chunk of every file is
/// validated against current content (exact match of context and removed
/// lines at their stated positions) before anything is written.
pub fn apply_patch(root: &Path, chunks: &[DiffChunk]) -> Result<PatchOutcome, PatchError> {
    let mut by_file: BTreeMap<&str, Vec<&DiffChunk>> = BTreeMap::new();
    for c in chunks {
        by_file.entry(c.file.as_str()).or_default().push(c);
    }

    let mut staged: Vec<(String, String)> = Vec::new();
    let mut outcome = PatchOutcome::default();

    for (file, mut file_chunks) in by_file {
        file_chunks.sort_by_key(|c| (c.old_start, c.new_start));
        let path = root.join(file);
        let creates = file_chunks.iter().all(|c| c.old_len == 0 && c.old_start == 0);
        let old_text = if path.exists() {
            crate::fsutil::read_text_lf(&path)
                .map_err(|e| PatchError::Io(file.to_string(), e.to_string()))?
        } else if creates {
            String::new()
        } else {
            return Err(PatchError::MissingFile { file: file.to_string() });
        };
        let old_lines: Vec<&str> = crate::fsutil::split_lines(&old_text);

        let mut new_lines: Vec<String> = Vec::new();
        let mut cursor = 0usize; // 0-based index into old_lines, next uncopied
        for c in &file_chunks {
            let copy_until = if c.old_len > 0 { c.old_start as usize - 1 } else { c.old_start as usize };
            if copy_until < cursor || copy_until > old_lines.len() {
                return Err(PatchError::PatchConflict {
                    file: file.to_string(),
                    line: c.old_start,
                    expected: "chunks in ascending non-overlapping order".into(),
                    found: format!("chunk at old line {}", c.old_start),
                });
            }
            for idx in cursor..copy_until {
                new_lines.push(old_lines[idx].to_string());
            }
            cursor = copy_until;
            for l in &c.lines {
                match l.kind {
                    DiffLineKind::Context | DiffLineKind::Removed => {
                        let found = old_lines.get(cursor).copied();
                        if found != Some(l.text.as_str()) {
                            return Err(PatchError::PatchConflict {
                                file: file.to_string(),
                                line: l.old_no.unwrap_or(c.old_start),
                                expected: l.text.clone(),
                                found: found.unwrap_or("<end of file>").to_string(),
                            });
                        }
                        cursor += 1;
                        if l.kind == DiffLineKind::Context {
                            new_lines.push(l.text.clone());
                        } else {
                            outcome.removed += 1;
                        }
                    }
                    DiffLineKind::Added => {
                        new_lines.push(l.text.clone());
                        outcome.added += 1;
                    }
                }
            }
        }
        for idx in cursor..old_lines.len() {
            new_lines.push(old_lines[idx].to_string());
        }
        let mut new_text = new_lines.join("\n");
        if !new_lines.is_empty() {
            new_text.push('\n'); // [""] must round-trip to "\n", not ""
        }
        outcome.files.push(file.to_string());
        staged.push((file.to_string(), new_text));
    }

    for (file, text) in staged {
        crate::fsutil::atomic_write(&root.join(&file), text.as_bytes())
            .map_err(|e| PatchError::Io(file, e.to_string()))?;
    }
    Ok(outcome)
}

// === segmentation ===

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("context source is missing file {file}")]
    MissingFile { file: String },
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

/// Turn diff chunks into review hunks: each chunk plus `pad` lines of
/// context from the post-diff file, with pre-state violation counts from
/// the findings that intersect its new-side span. Post counts stay empty
/// until a fix is evaluated.
pub fn segment_into_hunks(
    scenario_id: &str,
    chunks: &[DiffChunk],
    pre_findings: &[Finding],
    context_source: &Path,
    pad: u32,
) -> Result<Vec<Hunk>, SegmentError> {
    let mut file_cache: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut hunks = Vec::new();
    for c in chunks {
        let lines = match file_cache.get(&c.file) {
            Some(l) => l,
            None => {
                let path = context_source.join(&c.file);
                if !path.exists() {
                    return Err(SegmentError::MissingFile { file: c.file.clone() });
                }
                let text = crate::fsutil::read_text_lf(&path)
                    .map_err(|e| SegmentError::Io(c.file.clone(), e.to_string()))?;
                let split: Vec<String> =
                    crate::fsutil::split_lines(&text).into_iter().map(str::to_string).collect();
                file_cache.entry(c.file.clone()).or_insert(split)
            }
        };
        let span = c.new_span();
        let anchor = if span.is_empty() { c.new_start.max(1) } else { span.start };
        let end_anchor = if span.is_empty() { c.new_start.max(1) } else { span.end };
        let from = anchor.saturating_sub(pad).max(1) as usize;
        let to = ((end_anchor + pad) as usize).min(lines.len());
        let mut slice = String::new();
        if from <= to {
            for line in &lines[from - 1..to] {
                slice.push_str(line);
                slice.push('\n');
            }
        }
        let mut pre = BTreeMap::new();
        for f in pre_findings {
            if f.file == c.file && span.intersects(&f.span()) {
                *pre.entry(f.rule_id.clone()).or_insert(0u32) += 1;
            }
        }
        hunks.push(Hunk {
            id: Hunk::compute_id(scenario_id, &c.file, span, &slice),
            scenario_id: scenario_id.to_string(),
            file: c.file.clone(),
            new_span: span,
            pre_violations: pre,
            post_violations: BTreeMap::new(),
            diff_stats: c.stats(),
            context_slice: slice,
        });
    }
    Ok(hunks)
}
