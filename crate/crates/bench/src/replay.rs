//! Benchmark replay: run one backend over every hunk of a generated
//! benchmark and record per-hunk outcomes. Each hunk gets an isolated
//! workspace (corpus copy plus the scenario diff) so one hunk's fix can
//! never bleed into another's measurement, and the production phases are
//! mirrored and timed: analysis, context extraction, generation, patch
//! application, re-analysis.
//!
//! Failure handling is fail-closed like the review pipeline: a failed or
//! contract-violating generation is counted and skipped, a conflicting
//! patch is tolerated, and only harness-level breakage (workspace setup,
//! analyzer errors, pre-violation drift) marks the hunk `Error`.

use crate::generate::{BenchInfo, ScenarioManifest, DIFFS_DIR, HUNKS_FILE, INFO_FILE, MANIFEST_FILE};
use crate::metrics::{derive_status, HunkResult, HunkStatus};
use grev_core::analyzer::{analyze_tree, RuleRegistry};
use grev_core::context::{build_call_graph, extract_context, CallGraph, ContextConfig};
use grev_core::diffing::{apply_patch, parse_unified_diff, DiffChunk};
use grev_core::fsutil;
use grev_core::model::{Finding, Hunk, LineSpan, PhaseTimings};
use grev_core::prompting::{build_prompt, validate_response, PromptTemplates};
use grev_serving::backend::{GenerationRequest, InferenceBackend};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

pub const RUN_INFO_FILE: &str = "run.json";

/// Model identity sent with every replay request. Constant so repeated runs
/// of the same benchmark produce identical cache keys.
pub const REPLAY_MODEL_ID: &str = "grounded-reviewer";

pub fn replay_params_json() -> serde_json::Value {
    serde_json::json!({"temperature": 0.0, "max_tokens": 1024})
}

#[derive(Debug, Clone)]
pub struct ReplayParams {
    pub bench_dir: PathBuf,
    pub corpus_dir: PathBuf,
    /// Label for this run, e.g. "scripted/default". Recorded in run.json and
    /// (sanitized) in the results file name.
    pub profile: String,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl ReplayParams {
    pub fn new(bench_dir: PathBuf, corpus_dir: PathBuf, profile: &str, out_dir: PathBuf) -> Self {
        Self { bench_dir, corpus_dir, profile: profile.to_string(), out_dir, workers: 1 }
    }
}

/// `run.json`: where the results landed and what produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub schema_version: u32,
    pub profile: String,
    pub backend: String,
    pub results_file: String,
    pub hunks: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("missing benchmark artifact {0}")]
    MissingArtifact(String),
    #[error("malformed {file} line {line}: {detail}")]
    Parse { file: String, line: usize, detail: String },
    #[error("benchmark has no hunks")]
    Empty,
    #[error("corpus tree {found} does not match benchmark snapshot {expected}")]
    CorpusMismatch { expected: String, found: String },
}

/// File name the results land in. The profile label may contain `/` (it is
/// split into model/setting columns later), so it is flattened here.
pub fn results_file_name(profile: &str) -> String {
    let safe: String = profile
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect();
    format!("results-{safe}.jsonl")
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReplayError> {
    let name = path.display().to_string();
    let text = fsutil::read_text_lf(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ReplayError::MissingArtifact(name.clone())
        } else {
            ReplayError::Io(name.clone(), e.to_string())
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| ReplayError::Parse {
            file: name.clone(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Load a finished run back: the profile label and its per-hunk results.
pub fn load_results(run_dir: &Path) -> Result<(String, Vec<HunkResult>), ReplayError> {
    let info_path = run_dir.join(RUN_INFO_FILE);
    let name = info_path.display().to_string();
    let text = fsutil::read_text_lf(&info_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ReplayError::MissingArtifact(name.clone())
        } else {
            ReplayError::Io(name.clone(), e.to_string())
        }
    })?;
    let info: RunInfo = serde_json::from_str(&text)
        .map_err(|e| ReplayError::Parse { file: name, line: 1, detail: e.to_string() })?;
    let results = read_jsonl(&run_dir.join(&info.results_file))?;
    Ok((info.profile, results))
}

struct ReplayCtx<'a> {
    corpus: &'a Path,
    registry: &'a RuleRegistry,
    templates: &'a PromptTemplates,
    context: &'a ContextConfig,
    backend: &'a dyn InferenceBackend,
    params: serde_json::Value,
}

/// Replay every hunk of the benchmark against `backend` and write
/// `results-<profile>.jsonl` plus `run.json` under `out_dir`. Results come
/// back (and are written) in hunks-file order regardless of worker count.
pub fn replay_benchmark(
    params: &ReplayParams,
    backend: Arc<dyn InferenceBackend>,
) -> Result<Vec<HunkResult>, ReplayError> {
    let hunks: Vec<Hunk> = read_jsonl(&params.bench_dir.join(HUNKS_FILE))?;
    if hunks.is_empty() {
        return Err(ReplayError::Empty);
    }

    // The corpus must be the exact tree the benchmark was cut from.
    let info_path = params.bench_dir.join(INFO_FILE);
    let info_name = info_path.display().to_string();
    let info: BenchInfo = serde_json::from_str(
        &fsutil::read_text_lf(&info_path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ReplayError::MissingArtifact(info_name.clone())
            } else {
                ReplayError::Io(info_name.clone(), e.to_string())
            }
        })?,
    )
    .map_err(|e| ReplayError::Parse { file: info_name, line: 1, detail: e.to_string() })?;
    let corpus_sha = grev_core::hash::tree_snapshot_sha(&params.corpus_dir)
        .map_err(|e| ReplayError::Io(params.corpus_dir.display().to_string(), e.to_string()))?;
    if corpus_sha != info.corpus_sha {
        return Err(ReplayError::CorpusMismatch { expected: info.corpus_sha, found: corpus_sha });
    }

    let manifests: Vec<ScenarioManifest> = read_jsonl(&params.bench_dir.join(MANIFEST_FILE))?;
    let known: BTreeSet<&str> = manifests.iter().map(|m| m.scenario_id.as_str()).collect();

    // Parse each scenario diff once, up front, so a broken artifact fails the
    // run instead of surfacing as per-hunk errors.
    let mut scenario_chunks: BTreeMap<String, Arc<Vec<DiffChunk>>> = BTreeMap::new();
    for h in &hunks {
        if !known.contains(h.scenario_id.as_str()) {
            return Err(ReplayError::MissingArtifact(format!(
                "manifest row for scenario {}",
                h.scenario_id
            )));
        }
        if scenario_chunks.contains_key(&h.scenario_id) {
            continue;
        }
        let path = params.bench_dir.join(DIFFS_DIR).join(format!("{}.diff", h.scenario_id));
        let name = path.display().to_string();
        let text = fsutil::read_text_lf(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ReplayError::MissingArtifact(name.clone())
            } else {
                ReplayError::Io(name.clone(), e.to_string())
            }
        })?;
        let chunks = parse_unified_diff(&text)
            .map_err(|e| ReplayError::Parse { file: name, line: 0, detail: e.to_string() })?;
        scenario_chunks.insert(h.scenario_id.clone(), Arc::new(chunks));
    }

    let registry = RuleRegistry::builtin();
    let templates = PromptTemplates::builtin();
    let context = ContextConfig::default();
    let ctx = ReplayCtx {
        corpus: &params.corpus_dir,
        registry: &registry,
        templates: &templates,
        context: &context,
        backend: &*backend,
        params: replay_params_json(),
    };

    let scratch = params.out_dir.join(".replay-scratch");
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch)
        .map_err(|e| ReplayError::Io(scratch.display().to_string(), e.to_string()))?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<HunkResult>>> = Mutex::new(vec![None; hunks.len()]);
    let workers = params.workers.max(1).min(hunks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= hunks.len() {
                    break;
                }
                let hunk = &hunks[i];
                let chunks = &scenario_chunks[&hunk.scenario_id];
                let work = scratch.join(format!("h{i:04}"));
                let result = replay_hunk(&ctx, hunk, chunks, &work);
                let _ = std::fs::remove_dir_all(&work);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let results: Vec<HunkResult> =
        slots.into_inner().unwrap().into_iter().map(|r| r.expect("worker filled slot")).collect();
    let _ = std::fs::remove_dir_all(&scratch);

    std::fs::create_dir_all(&params.out_dir)
        .map_err(|e| ReplayError::Io(params.out_dir.display().to_string(), e.to_string()))?;
    let results_file = results_file_name(&params.profile);
    let mut buf = String::new();
    for r in &results {
        buf.push_str(&serde_json::to_string(r).expect("result serializes"));
        buf.push('\n');
    }
    let results_path = params.out_dir.join(&results_file);
    fsutil::atomic_write(&results_path, buf.as_bytes())
        .map_err(|e| ReplayError::Io(results_path.display().to_string(), e.to_string()))?;

    let info = RunInfo {
        schema_version: 1,
        profile: params.profile.clone(),
        backend: backend.label(),
        results_file,
        hunks: results.len(),
    };
    let info_path = params.out_dir.join(RUN_INFO_FILE);
    let mut info_text = serde_json::to_string_pretty(&info).expect("info serializes");
    info_text.push('\n');
    fsutil::atomic_write(&info_path, info_text.as_bytes())
        .map_err(|e| ReplayError::Io(info_path.display().to_string(), e.to_string()))?;
    Ok(results)
}

fn violation_vector(findings: &[Finding], file: &str, span: LineSpan) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for f in findings {
        if f.file == file && span.intersects(&f.span()) {
            *out.entry(f.rule_id.clone()).or_insert(0u32) += 1;
        }
    }
    out
}

/// Map the hunk span into post-fix coordinates: applied chunks fully above
/// the span shift it, chunks overlapping it grow or shrink its end. Chunk
/// positions are old-side (the file state the fix was diffed against), which
/// is the coordinate system the span lives in. With stacked patches the later
/// ones are approximate, which is acceptable: in practice a second patch over
/// the same lines conflicts and is never applied.
fn adjust_span(span: LineSpan, applied: &[DiffChunk], file: &str) -> LineSpan {
    let mut start = span.start as i64;
    let mut end = span.end as i64;
    for c in applied.iter().filter(|c| c.file == file) {
        let delta = c.new_len as i64 - c.old_len as i64;
        if delta == 0 {
            continue;
        }
        // Pure inserts at old_start k land after line k.
        let (c_start, c_end) = if c.old_len == 0 {
            (c.old_start as i64 + 1, c.old_start as i64)
        } else {
            (c.old_start as i64, c.old_start as i64 + c.old_len as i64 - 1)
        };
        if c_end < start {
            start += delta;
            end += delta;
        } else if c_start <= end {
            end += delta;
        }
    }
    if end < start {
        end = start;
    }
    LineSpan::new(start.max(1) as u32, end.max(1) as u32)
}

fn harness_error(result: &mut HunkResult, detail: String) {
    result.status = HunkStatus::Error;
    result.failure = Some(detail);
    result.post_violations = result.pre_violations.clone();
}

fn replay_hunk(ctx: &ReplayCtx, hunk: &Hunk, scenario: &[DiffChunk], work: &Path) -> HunkResult {
    let mut result = HunkResult {
        hunk_id: hunk.id.clone(),
        scenario_id: hunk.scenario_id.clone(),
        status: HunkStatus::Error,
        pre_violations: hunk.pre_violations.clone(),
        post_violations: hunk.pre_violations.clone(),
        diff_stats: hunk.diff_stats,
        timings: PhaseTimings::default(),
        patches_offered: 0,
        patches_applied: 0,
        fix_lines_changed: 0,
        generation_failures: 0,
        failure: None,
    };

    // Workspace materialization is harness overhead, untimed.
    if let Err(e) = fsutil::copy_tree(ctx.corpus, work) {
        harness_error(&mut result, format!("workspace: {e}"));
        return result;
    }
    if let Err(e) = apply_patch(work, scenario) {
        harness_error(&mut result, format!("workspace: scenario diff: {e}"));
        return result;
    }

    // Pre-fix analysis. The hunk's recorded violations must reproduce
    // exactly, otherwise the corpus has drifted under the benchmark and
    // every measurement downstream would be garbage.
    let started = Instant::now();
    let pre_run = match analyze_tree(work, ctx.registry) {
        Ok(r) => r,
        Err(e) => {
            harness_error(&mut result, format!("analysis: {e}"));
            return result;
        }
    };
    result.timings.build_s += started.elapsed().as_secs_f64();
    let pre_now = violation_vector(&pre_run.findings, &hunk.file, hunk.new_span);
    if pre_now != hunk.pre_violations {
        harness_error(
            &mut result,
            format!(
                "pre-violation drift: benchmark recorded {:?}, workspace has {:?}",
                hunk.pre_violations, pre_now
            ),
        );
        return result;
    }

    let graph = match build_call_graph(work) {
        Ok(g) => g,
        Err(e) => {
            harness_error(&mut result, format!("call graph: {e}"));
            return result;
        }
    };

    let scoped: Vec<Finding> = pre_run
        .findings
        .iter()
        .filter(|f| f.file == hunk.file && hunk.new_span.intersects(&f.span()))
        .cloned()
        .collect();

    let mut applied_chunks: Vec<DiffChunk> = Vec::new();
    for finding in &scoped {
        if let Err(e) = review_one(ctx, &graph, work, hunk, finding, &mut result, &mut applied_chunks)
        {
            harness_error(&mut result, e);
            return result;
        }
    }

    if result.patches_applied > 0 {
        let started = Instant::now();
        let post_run = match analyze_tree(work, ctx.registry) {
            Ok(r) => r,
            Err(e) => {
                harness_error(&mut result, format!("post analysis: {e}"));
                return result;
            }
        };
        result.timings.build_s += started.elapsed().as_secs_f64();
        let span = adjust_span(hunk.new_span, &applied_chunks, &hunk.file);
        result.post_violations = violation_vector(&post_run.findings, &hunk.file, span);
    } else {
        result.post_violations = result.pre_violations.clone();
    }

    if result.patches_offered > 0 && result.patches_applied == 0 {
        result.status = HunkStatus::Error;
        result.failure = Some("all patches conflicted".into());
    } else {
        result.status = derive_status(&result.pre_violations, &result.post_violations);
    }
    result
}

/// One finding's trip through context, generation, validation, and patch
/// application. Generation and contract failures are counted on `result` and
/// swallowed; the Err side is reserved for harness breakage that invalidates
/// the whole hunk.
fn review_one(
    ctx: &ReplayCtx,
    graph: &CallGraph,
    work: &Path,
    hunk: &Hunk,
    finding: &Finding,
    result: &mut HunkResult,
    applied_chunks: &mut Vec<DiffChunk>,
) -> Result<(), String> {
    let rule = match ctx.registry.rules.get(&finding.rule_id) {
        Some(r) => r,
        None => {
            result.generation_failures += 1;
            return Ok(());
        }
    };
    let started = Instant::now();
    let slice = extract_context(graph, work, &finding.file, finding.span(), ctx.context);
    result.timings.context_s += started.elapsed().as_secs_f64();
    let slice = slice.map_err(|e| format!("context: {e}"))?;
    let prompt = build_prompt(ctx.templates, rule, finding, &slice);

    let started = Instant::now();
    let raw = ctx.backend.generate(&GenerationRequest {
        model_id: REPLAY_MODEL_ID.into(),
        params: ctx.params.clone(),
        prompt: prompt.text.clone(),
    });
    result.timings.llm_s += started.elapsed().as_secs_f64();
    let raw = match raw {
        Ok(r) => r,
        Err(_) => {
            result.generation_failures += 1;
            return Ok(());
        }
    };
    let response = match validate_response(&raw, &prompt) {
        Ok(r) => r,
        Err(_) => {
            result.generation_failures += 1;
            return Ok(());
        }
    };
    let Some(patch_text) = response.patch else {
        return Ok(());
    };
    result.patches_offered += 1;
    // An unparsable or conflicting patch is a fix that failed to land, not a
    // harness problem: leave the workspace untouched and move on.
    let Ok(chunks) = parse_unified_diff(&patch_text) else {
        return Ok(());
    };
    if chunks.iter().any(|c| c.file != hunk.file) {
        return Ok(());
    }
    let started = Instant::now();
    let outcome = apply_patch(work, &chunks);
    result.timings.apply_s += started.elapsed().as_secs_f64();
    if let Ok(o) = outcome {
        result.patches_applied += 1;
        result.fix_lines_changed += o.added + o.removed;
        applied_chunks.extend(chunks);
    }
    Ok(())
}
