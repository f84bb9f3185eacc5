//! Seeded benchmark generation. Every scenario is a known fault injected
//! into a clean region of the corpus, shipped as four artifacts: the
//! scenario diff, a manifest row recording what was injected where, the
//! segmented hunks with their pre-fix violation vectors, and a scripted
//! reply per finding whose patch is the exact inverse of the injection.
//!
//! Generation is a pure function of (corpus tree, seed, parameters): no
//! timestamps, no host state, canonical orderings throughout, so repeated
//! runs produce byte-identical artifact trees.

use crate::mutate::{self, apply_mutation, MutationKind, MutationSite};
use grev_core::analyzer::{analyze_tree, AnalyzerConfig, RuleRegistry};
use grev_core::context::{build_call_graph, extract_context, ContextConfig};
use grev_core::diffing::{diff_file, render_unified_diff, DiffChunk};
use grev_core::fsutil;
use grev_core::hash::tree_snapshot_sha;
use grev_core::model::Finding;
use grev_core::prompting::{build_prompt, PromptTemplates, RemediationStep, ReviewResponse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const HUNKS_FILE: &str = "hunks.jsonl";
pub const INFO_FILE: &str = "bench.json";
pub const DIFFS_DIR: &str = "diffs";
pub const FIXTURES_DIR: &str = "fixtures";
pub const CORPUS_DIR: &str = "corpus";
pub const SCRIPTED_MODEL_VERSION: &str = "scripted-fixer-v1";

#[derive(Debug, Clone)]
pub struct GenParams {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_scenarios: usize,
    pub seed: u64,
    /// Inclusive bounds on mutations sampled per scenario.
    pub mutations_per_scenario: (u32, u32),
}

impl GenParams {
    pub fn new(corpus_dir: PathBuf, out_dir: PathBuf) -> Self {
        Self { corpus_dir, out_dir, n_scenarios: 20, seed: 42, mutations_per_scenario: (1, 1) }
    }
}

/// One line of `manifest.jsonl`: inputs and outputs of a scenario, enough to
/// regenerate it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub scenario_id: String,
    /// Tree hash of the corpus the scenario diff applies to.
    pub repo_snapshot: String,
    pub transformation_seed: u64,
    pub mutations: Vec<mutate::Mutation>,
    pub hunk_ids: Vec<String>,
}

/// `bench.json`: the generation inputs and artifact counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchInfo {
    pub schema_version: u32,
    pub tool_version: String,
    pub corpus_sha: String,
    pub seed: u64,
    pub scenarios: usize,
    pub hunks: usize,
    pub fixtures: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("{0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Mutate(#[from] mutate::MutateError),
    #[error("n_scenarios must be at least 1")]
    NoScenarios,
    #[error("analysis failed: {0}")]
    Analyzer(String),
    #[error("hunk segmentation failed: {0}")]
    Segment(String),
    #[error("context extraction failed: {0}")]
    Context(String),
    #[error("generator invariant broken: {0}")]
    Internal(String),
}

fn io_err(what: &Path) -> impl Fn(std::io::Error) -> GenError + '_ {
    move |e| GenError::Io(what.display().to_string(), e.to_string())
}

pub fn generate_benchmark(params: &GenParams) -> Result<BenchInfo, GenError> {
    if params.n_scenarios == 0 {
        return Err(GenError::NoScenarios);
    }
    let (mut_min, mut_max) = params.mutations_per_scenario;
    if mut_min == 0 || mut_min > mut_max {
        return Err(GenError::Internal(format!(
            "mutations_per_scenario bounds ({mut_min}, {mut_max}) are not a valid range"
        )));
    }

    let corpus = &params.corpus_dir;
    let registry = RuleRegistry::builtin();
    let config = AnalyzerConfig::load(corpus).map_err(|e| GenError::Analyzer(e.to_string()))?;
    let sites = mutate::enumerate_sites(corpus, &registry, &config)?;
    if (sites.len() as u32) < mut_min {
        return Err(mutate::MutateError::CorpusTooSmall {
            needed: mut_min as usize,
            available: sites.len(),
        }
        .into());
    }
    let corpus_sha = tree_snapshot_sha(corpus).map_err(io_err(corpus))?;

    // Kind-bucketed pools; a pool refills once drained so reuse across
    // scenarios is possible but never preferred over an unused site.
    let full_pools: BTreeMap<MutationKind, Vec<usize>> = MutationKind::ALL
        .iter()
        .map(|&k| {
            let ids = sites
                .iter()
                .enumerate()
                .filter(|(_, s)| s.kind == k)
                .map(|(i, _)| i)
                .collect::<Vec<_>>();
            (k, ids)
        })
        .collect();
    let mut pools = full_pools.clone();

    prepare_out_dir(&params.out_dir)?;
    let scratch = params.out_dir.join(".gen-scratch");

    let templates = PromptTemplates::builtin();
    let ctx_config = ContextConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut manifest_lines = String::new();
    let mut hunk_lines = String::new();
    let mut fixtures: BTreeMap<String, String> = BTreeMap::new();
    let mut n_hunks = 0usize;

    for s in 0..params.n_scenarios {
        let scenario_id = format!("s{s:03}");
        let n_mut = rng.gen_range(mut_min..=mut_max) as usize;
        let chosen = pick_sites(&sites, &full_pools, &mut pools, &mut rng, s, n_mut)?;

        // Materialize the scenario tree and diff it against the corpus.
        let work = scratch.join(&scenario_id);
        fsutil::copy_tree(corpus, &work).map_err(io_err(&work))?;
        let mut chunks: Vec<DiffChunk> = Vec::new();
        let mut by_file: BTreeMap<&str, Vec<&MutationSite>> = BTreeMap::new();
        for site in &chosen {
            by_file.entry(site.file.as_str()).or_default().push(site);
        }
        for (file, mut file_sites) in by_file {
            // Splices were enumerated against the pristine file; applying
            // bottom-up keeps every site's line numbers valid.
            file_sites.sort_by(|a, b| b.line.cmp(&a.line));
            let old = fsutil::read_text_lf(&corpus.join(file)).map_err(io_err(corpus))?;
            let mut new = old.clone();
            for site in file_sites {
                new = apply_mutation(&new, site);
            }
            fsutil::atomic_write(&work.join(file), new.as_bytes()).map_err(io_err(&work))?;
            chunks.extend(diff_file(file, &old, &new, 3));
        }
        let diff_text = render_unified_diff(&chunks);
        fsutil::atomic_write(
            &params.out_dir.join(DIFFS_DIR).join(format!("{scenario_id}.diff")),
            diff_text.as_bytes(),
        )
        .map_err(io_err(&params.out_dir))?;

        // Post-mutation analysis is the "pre" side of the fix evaluation.
        let run = analyze_tree(&work, &registry).map_err(|e| GenError::Analyzer(e.to_string()))?;
        let hunks =
            grev_core::diffing::segment_into_hunks(&scenario_id, &chunks, &run.findings, &work, 3)
                .map_err(|e| GenError::Segment(e.to_string()))?;
        for (site, hunk) in chosen.iter().zip(hunks.iter()) {
            // One mutation, one hunk, in order; each must carry its rule.
            if chosen.len() == hunks.len()
                && !hunk.pre_violations.contains_key(site.kind.rule_targeted())
            {
                return Err(GenError::Internal(format!(
                    "{scenario_id}: {} at {}:{} left no {} violation in its hunk",
                    site.kind,
                    site.file,
                    site.line,
                    site.kind.rule_targeted()
                )));
            }
        }

        // Scripted replies: one per finding per hunk, each carrying the
        // file-level inverse diff that remediates the injection.
        let graph = build_call_graph(&work).map_err(io_err(&work))?;
        for hunk in &hunks {
            let in_hunk: Vec<&Finding> = run
                .findings
                .iter()
                .filter(|f| f.file == hunk.file && f.span().intersects(&hunk.new_span))
                .collect();
            let old = fsutil::read_text_lf(&corpus.join(&hunk.file)).map_err(io_err(corpus))?;
            let mutated = fsutil::read_text_lf(&work.join(&hunk.file)).map_err(io_err(&work))?;
            let inverse = render_unified_diff(&diff_file(&hunk.file, &mutated, &old, 3));
            for f in in_hunk {
                let rule = registry.rules.get(&f.rule_id).ok_or_else(|| {
                    GenError::Internal(format!("finding cites unknown rule {}", f.rule_id))
                })?;
                let slice = extract_context(&graph, &work, &f.file, f.span(), &ctx_config)
                    .map_err(|e| GenError::Context(e.to_string()))?;
                let prompt = build_prompt(&templates, rule, f, &slice);
                let reply = scripted_reply(f, &rule.title, &inverse);
                let mut body = serde_json::to_string_pretty(&reply)
                    .map_err(|e| GenError::Internal(e.to_string()))?;
                body.push('\n');
                fixtures.insert(format!("{}.json", prompt.prompt_hash), body);
            }
        }

        let manifest = ScenarioManifest {
            scenario_id: scenario_id.clone(),
            repo_snapshot: corpus_sha.clone(),
            transformation_seed: params.seed,
            mutations: chosen.iter().map(|s| s.manifest_row()).collect(),
            hunk_ids: hunks.iter().map(|h| h.id.clone()).collect(),
        };
        manifest_lines.push_str(&serde_json::to_string(&manifest).expect("manifest serializes"));
        manifest_lines.push('\n');
        for hunk in &hunks {
            hunk_lines.push_str(&serde_json::to_string(hunk).expect("hunk serializes"));
            hunk_lines.push('\n');
        }
        n_hunks += hunks.len();
        std::fs::remove_dir_all(&work).map_err(io_err(&work))?;
    }

    let out = &params.out_dir;
    // Snapshot the corpus into the benchmark so a bench directory replays
    // standalone; the recorded tree hash pins it against drift.
    fsutil::copy_tree(corpus, &out.join(CORPUS_DIR)).map_err(io_err(out))?;
    fsutil::atomic_write(&out.join(MANIFEST_FILE), manifest_lines.as_bytes())
        .map_err(io_err(out))?;
    fsutil::atomic_write(&out.join(HUNKS_FILE), hunk_lines.as_bytes()).map_err(io_err(out))?;
    for (name, body) in &fixtures {
        fsutil::atomic_write(&out.join(FIXTURES_DIR).join(name), body.as_bytes())
            .map_err(io_err(out))?;
    }
    let info = BenchInfo {
        schema_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        corpus_sha,
        seed: params.seed,
        scenarios: params.n_scenarios,
        hunks: n_hunks,
        fixtures: fixtures.len(),
    };
    let mut info_body = serde_json::to_string_pretty(&info).expect("info serializes");
    info_body.push('\n');
    fsutil::atomic_write(&out.join(INFO_FILE), info_body.as_bytes()).map_err(io_err(out))?;
    std::fs::remove_dir_all(&scratch).ok();
    Ok(info)
}

/// Reset known artifact paths without touching anything else in `out`.
fn prepare_out_dir(out: &Path) -> Result<(), GenError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for file in [MANIFEST_FILE, HUNKS_FILE, INFO_FILE] {
        let p = out.join(file);
        if p.exists() {
            std::fs::remove_file(&p).map_err(io_err(out))?;
        }
    }
    for dir in [DIFFS_DIR, FIXTURES_DIR, CORPUS_DIR, ".gen-scratch"] {
        let p = out.join(dir);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(io_err(out))?;
        }
    }
    std::fs::create_dir_all(out.join(DIFFS_DIR)).map_err(io_err(out))?;
    std::fs::create_dir_all(out.join(FIXTURES_DIR)).map_err(io_err(out))?;
    Ok(())
}

/// Draw `n_mut` non-overlapping sites. Scenario index anchors a round-robin
/// over operator kinds so a default-sized benchmark exercises all six.
fn pick_sites(
    sites: &[MutationSite],
    full_pools: &BTreeMap<MutationKind, Vec<usize>>,
    pools: &mut BTreeMap<MutationKind, Vec<usize>>,
    rng: &mut ChaCha8Rng,
    scenario: usize,
    n_mut: usize,
) -> Result<Vec<MutationSite>, GenError> {
    let mut chosen: Vec<MutationSite> = Vec::new();
    for m in 0..n_mut {
        let mut picked = None;
        for offset in 0..MutationKind::ALL.len() {
            let kind = MutationKind::ALL[(scenario + m + offset) % MutationKind::ALL.len()];
            let pool = pools.get_mut(&kind).expect("every kind has a pool");
            if pool.is_empty() {
                pool.clone_from(full_pools.get(&kind).expect("full pool"));
            }
            let free: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&i| !overlaps_chosen(&sites[i], &chosen))
                .collect();
            if free.is_empty() {
                continue;
            }
            let idx = free[rng.gen_range(0..free.len())];
            pool.retain(|&i| i != idx);
            picked = Some(sites[idx].clone());
            break;
        }
        match picked {
            Some(site) => chosen.push(site),
            None => {
                return Err(mutate::MutateError::CorpusTooSmall {
                    needed: n_mut,
                    available: chosen.len(),
                }
                .into())
            }
        }
    }
    Ok(chosen)
}

/// Two mutations may share a file only when their diffs cannot interact:
/// keep a generous gap so context lines never merge hunks.
fn overlaps_chosen(candidate: &MutationSite, chosen: &[MutationSite]) -> bool {
    chosen.iter().any(|c| {
        c.file == candidate.file && c.line.abs_diff(candidate.line) < 40
    })
}

fn scripted_reply(finding: &Finding, rule_title: &str, inverse_patch: &str) -> ReviewResponse {
    ReviewResponse {
        rationale: format!(
            "{} at line {}: the flagged construct was introduced by a recent change and the \
             prior form of this region satisfied the rule.",
            rule_title, finding.line_start
        ),
        risk: "The violation is mechanical and local; restoring the previous form carries no \
               behavioral change."
            .to_string(),
        remediation: vec![RemediationStep {
            description: "apply the attached patch restoring the compliant form".to_string(),
            cited_lines: vec![finding.line_start],
        }],
        patch: Some(inverse_patch.to_string()),
        model_version: SCRIPTED_MODEL_VERSION.to_string(),
    }
}
