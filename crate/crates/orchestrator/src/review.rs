//! The review pipeline, end to end: dedup the event, materialize the PR
//! workspace, build, analyze, scope findings to the diff, apply the
//! deviation policy, then per finding extract context, generate a grounded
//! comment, validate it against the contract, and post. Generation or
//! validation failure withholds the comment and leaves an audit event
//! instead; nothing unvalidated is ever posted.
//!
//! Accounting invariant, checked and reported per run: every in-scope
//! finding is posted, suppressed, or failed. The three sets partition the
//! findings exactly.

use crate::buildcfg::{run_build, BuildConfig, BuildConfigError};
use crate::comment::{render_comment_md, thread_key, ReviewComment};
use crate::event::{dedup_key, EventError, PrEvent, ProcessedIndex};
use crate::sink::CommentSink;
use grev_core::audit::{AuditEvent, AuditLog};
use grev_core::clock::SharedClock;
use grev_core::context::{build_call_graph, extract_context, ContextConfig};
use grev_core::diffing::{apply_patch, parse_unified_diff};
use grev_core::hash::tree_snapshot_sha;
use grev_core::model::{
    filter_findings_to_diff, rfc3339_from_unix, Finding, PhaseTimings, ProvenanceRecord,
};
use grev_core::prompting::{build_prompt, validate_response, PromptTemplates};
use grev_core::{analyzer, fsutil, policy};
use grev_serving::backend::{GenerationRequest, InferenceBackend};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

// === configuration ===

#[derive(Debug, Clone)]
pub struct ReviewConfig {
    /// Checkout of the base tree PR diffs apply to.
    pub base_root: PathBuf,
    /// Sink root for comments and reports; also holds the processed-event
    /// index.
    pub out_dir: PathBuf,
    pub audit_path: PathBuf,
    /// Parent for materialized workspaces; system temp dir when absent.
    pub work_dir: Option<PathBuf>,
    pub model_id: String,
    pub params: serde_json::Value,
    pub context: ContextConfig,
    pub templates: PromptTemplates,
    /// Leave workspaces on disk for debugging.
    pub keep_workspace: bool,
}

impl ReviewConfig {
    pub fn new(base_root: PathBuf, out_dir: PathBuf) -> Self {
        let audit_path = out_dir.join("audit.log");
        Self {
            base_root,
            out_dir,
            audit_path,
            work_dir: None,
            model_id: "grounded-reviewer".into(),
            params: serde_json::json!({"temperature": 0.0, "max_tokens": 1024}),
            context: ContextConfig::default(),
            templates: PromptTemplates::builtin(),
            keep_workspace: false,
        }
    }
}

// === errors ===

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("base tree mismatch: event names {expected}, checkout hashes to {found}")]
    BaseMismatch { expected: String, found: String },
    #[error("head tree mismatch: event names {expected}, materialized workspace hashes to {found}")]
    HeadMismatch { expected: String, found: String },
    #[error("PR diff does not apply to the base tree: {0}")]
    Patch(String),
    #[error("build failed, review withheld:\n{log}")]
    BuildFailed { log: String },
    #[error("workspace requests analysis standard {requested:?}, this deployment provides {provided:?}")]
    UnknownStandard { requested: String, provided: String },
    #[error(transparent)]
    BuildConfig(#[from] BuildConfigError),
    #[error("analysis failed: {0}")]
    Analyzer(String),
    #[error("deviation policy rejected: {0}")]
    Policy(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ReviewError {
    fn from(e: std::io::Error) -> Self {
        ReviewError::Io(e.to_string())
    }
}

// === report ===

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostedComment {
    pub thread_key: String,
    pub file: String,
    pub rule_id: String,
    pub line_start: u32,
    pub line_end: u32,
    pub prompt_hash: String,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionRow {
    pub file: String,
    pub rule_id: String,
    pub line_start: u32,
    pub deviation_index: usize,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub file: String,
    pub rule_id: String,
    pub line_start: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub file: String,
    pub rule_id: String,
    pub line_start: u32,
    pub context_s: f64,
    pub llm_s: f64,
    pub total_s: f64,
    pub first_feedback_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub repo: String,
    pub pr: u64,
    pub head_sha: String,
    pub standard: String,
    pub build_s: f64,
    pub analysis_s: f64,
    pub findings_in_scope: usize,
    pub comments_posted: usize,
    pub suppressed: usize,
    pub generation_failures: usize,
    /// `findings_in_scope == comments + suppressed + failures`; reported
    /// rather than assumed so a broken run is visible in its own artifact.
    pub conservation_ok: bool,
    pub comments: Vec<PostedComment>,
    pub suppressions: Vec<SuppressionRow>,
    pub failures: Vec<FailureRow>,
    pub stale_cleaned: Vec<String>,
    pub timings: Vec<TimingRow>,
}

#[derive(Debug)]
pub enum ReviewOutcome {
    Completed(Box<ReviewReport>),
    /// The (repo, pr, head revision) triple was already processed.
    Duplicate { key: String },
}

// === workspace ===

static WORKSPACE_NONCE: AtomicU64 = AtomicU64::new(0);

/// Materialized PR checkout, removed on drop unless kept.
struct Workspace {
    path: PathBuf,
    keep: bool,
}

impl Workspace {
    fn create(parent: Option<&PathBuf>, label: &str) -> std::io::Result<Self> {
        let root = match parent {
            Some(p) => p.clone(),
            None => std::env::temp_dir().join("grev-work"),
        };
        let nonce = WORKSPACE_NONCE.fetch_add(1, Ordering::Relaxed);
        let path = root.join(format!("{label}-{}-{nonce}", std::process::id()));
        std::fs::create_dir_all(&path)?;
        Ok(Self { path, keep: false })
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if !self.keep {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}

// === engine ===

pub struct ReviewEngine {
    config: ReviewConfig,
    registry: analyzer::RuleRegistry,
    clock: SharedClock,
    backend: Arc<dyn InferenceBackend>,
    sink: Box<dyn CommentSink>,
    audit: AuditLog,
    processed: ProcessedIndex,
}

impl ReviewEngine {
    pub fn new(
        config: ReviewConfig,
        registry: analyzer::RuleRegistry,
        clock: SharedClock,
        backend: Arc<dyn InferenceBackend>,
        sink: Box<dyn CommentSink>,
    ) -> Result<Self, ReviewError> {
        std::fs::create_dir_all(&config.out_dir)?;
        let audit = AuditLog::open(&config.audit_path)?;
        let processed = ProcessedIndex::load(&config.out_dir.join("processed.log"))?;
        Ok(Self { config, registry, clock, backend, sink, audit, processed })
    }

    pub fn audit_path(&self) -> &std::path::Path {
        &self.config.audit_path
    }

    /// Run one event through the pipeline. Pipeline-level failures (bad
    /// diff, failed build, mismatched trees) abort with an error and post
    /// nothing; per-finding failures withhold that comment, audit it, and
    /// continue.
    pub fn run_review(&mut self, event: &PrEvent) -> Result<ReviewOutcome, ReviewError> {
        let chunks = parse_unified_diff(&event.diff)
            .map_err(|e| ReviewError::Event(EventError::BadDiff(e.to_string())))?;
        if chunks.is_empty() {
            return Err(ReviewError::Event(EventError::BadDiff("diff contains no hunks".into())));
        }

        // Cheap duplicate check when the event already names its head tree.
        if !event.head_sha.is_empty() {
            let key = dedup_key(&event.repo, event.pr, &event.head_sha);
            if self.processed.contains(&key) {
                return Ok(ReviewOutcome::Duplicate { key });
            }
        }

        if !event.base_sha.is_empty() {
            let found = tree_snapshot_sha(&self.config.base_root)?;
            if found != event.base_sha {
                return Err(ReviewError::BaseMismatch { expected: event.base_sha.clone(), found });
            }
        }

        let mut workspace = Workspace::create(
            self.config.work_dir.as_ref(),
            &format!("{}-pr{}", crate::comment::sanitize_thread_key(&event.repo), event.pr),
        )?;
        workspace.keep = self.config.keep_workspace;
        let work = workspace.path.clone();
        fsutil::copy_tree(&self.config.base_root, &work)?;
        apply_patch(&work, &chunks).map_err(|e| ReviewError::Patch(e.to_string()))?;

        let head_sha = tree_snapshot_sha(&work)?;
        if !event.head_sha.is_empty() && event.head_sha != head_sha {
            return Err(ReviewError::HeadMismatch {
                expected: event.head_sha.clone(),
                found: head_sha,
            });
        }
        let key = dedup_key(&event.repo, event.pr, &head_sha);
        if self.processed.contains(&key) {
            return Ok(ReviewOutcome::Duplicate { key });
        }

        let build_config = BuildConfig::load(&work)?;
        if build_config.analysis_standard != self.registry.standard_name {
            return Err(ReviewError::UnknownStandard {
                requested: build_config.analysis_standard,
                provided: self.registry.standard_name.clone(),
            });
        }
        let build = run_build(&work, &build_config);
        if !build.ok {
            return Err(ReviewError::BuildFailed { log: build.failure_log });
        }

        let run = analyzer::analyze_tree(&work, &self.registry)
            .map_err(|e| ReviewError::Analyzer(e.to_string()))?;
        let scoped: Vec<Finding> = if build_config.diff_scoped {
            filter_findings_to_diff(&run.findings, &chunks)
        } else {
            run.findings.clone()
        };
        let findings_in_scope = scoped.len();

        let graph = build_call_graph(&work)?;
        let deviations =
            policy::DeviationPolicy::load(&work).map_err(|e| ReviewError::Policy(e.to_string()))?;
        let outcome = deviations.apply(scoped, &graph, self.clock.now_s());

        let mut suppressions = Vec::new();
        for s in &outcome.suppressed {
            let d = &deviations.deviations[s.deviation_index];
            let now = self.clock.now_s();
            self.audit.append(
                AuditEvent::DeviationApplied {
                    pr: event.pr,
                    file: s.finding.file.clone(),
                    rule_id: s.finding.rule_id.clone(),
                    deviation_index: s.deviation_index,
                    owner: d.owner.clone(),
                    rationale: d.rationale.clone(),
                },
                now,
            )?;
            self.audit.append(
                AuditEvent::CommentSuppressed {
                    pr: event.pr,
                    file: s.finding.file.clone(),
                    rule_id: s.finding.rule_id.clone(),
                    line_start: s.finding.line_start,
                    line_end: s.finding.line_end,
                    owner: d.owner.clone(),
                },
                now,
            )?;
            suppressions.push(SuppressionRow {
                file: s.finding.file.clone(),
                rule_id: s.finding.rule_id.clone(),
                line_start: s.finding.line_start,
                deviation_index: s.deviation_index,
                owner: d.owner.clone(),
            });
        }

        let mut comments = Vec::new();
        let mut failures = Vec::new();
        let mut timings = Vec::new();
        for finding in &outcome.kept {
            match self.review_finding(event.pr, &work, &graph, finding, &head_sha) {
                Ok((posted, timing)) => {
                    timings.push(TimingRow {
                        file: finding.file.clone(),
                        rule_id: finding.rule_id.clone(),
                        line_start: finding.line_start,
                        context_s: timing.context_s,
                        llm_s: timing.llm_s,
                        total_s: timing.total_s(),
                        first_feedback_s: timing.first_feedback_s(),
                    });
                    comments.push(posted);
                }
                Err(reason) => {
                    self.audit.append(
                        AuditEvent::GenerationFailed {
                            pr: event.pr,
                            file: finding.file.clone(),
                            rule_id: finding.rule_id.clone(),
                            line_start: finding.line_start,
                            line_end: finding.line_end,
                            reason: reason.clone(),
                        },
                        self.clock.now_s(),
                    )?;
                    failures.push(FailureRow {
                        file: finding.file.clone(),
                        rule_id: finding.rule_id.clone(),
                        line_start: finding.line_start,
                        reason,
                    });
                }
            }
        }

        // Threads from earlier revisions that no current finding supports.
        let current: BTreeSet<String> = comments.iter().map(|c| c.thread_key.clone()).collect();
        let mut stale_cleaned = Vec::new();
        for stale in self.sink.existing_threads(event.pr)?.difference(&current) {
            self.sink.remove_thread(event.pr, stale)?;
            self.audit.append(
                AuditEvent::StaleCommentCleaned { pr: event.pr, thread_key: stale.clone() },
                self.clock.now_s(),
            )?;
            stale_cleaned.push(stale.clone());
        }

        let conservation_ok =
            findings_in_scope == comments.len() + suppressions.len() + failures.len();
        debug_assert!(conservation_ok, "findings partition violated");

        let report = ReviewReport {
            repo: event.repo.clone(),
            pr: event.pr,
            head_sha,
            standard: self.registry.standard_name.clone(),
            build_s: build.build_s,
            analysis_s: run.duration_s,
            findings_in_scope,
            comments_posted: comments.len(),
            suppressed: suppressions.len(),
            generation_failures: failures.len(),
            conservation_ok,
            comments,
            suppressions,
            failures,
            stale_cleaned,
            timings,
        };
        let mut body = serde_json::to_vec_pretty(&report).expect("report serializes");
        body.push(b'\n');
        self.sink.write_report(event.pr, &body)?;
        self.processed.record(&key)?;
        Ok(ReviewOutcome::Completed(Box::new(report)))
    }

    /// One finding: context, prompt, generate, validate, post. Any failure
    /// returns the reason; the caller audits it and withholds the comment.
    fn review_finding(
        &mut self,
        pr: u64,
        work: &std::path::Path,
        graph: &grev_core::context::CallGraph,
        finding: &Finding,
        head_sha: &str,
    ) -> Result<(PostedComment, PhaseTimings), String> {
        let rule = self
            .registry
            .rules
            .get(&finding.rule_id)
            .ok_or_else(|| format!("unknown rule {}", finding.rule_id))?;

        let started = Instant::now();
        let slice = extract_context(graph, work, &finding.file, finding.span(), &self.config.context)
            .map_err(|e| format!("context: {e}"))?;
        let context_s = started.elapsed().as_secs_f64();

        let prompt = build_prompt(&self.config.templates, rule, finding, &slice);
        let request = GenerationRequest {
            model_id: self.config.model_id.clone(),
            params: self.config.params.clone(),
            prompt: prompt.text.clone(),
        };
        let started = Instant::now();
        let raw = self.backend.generate(&request).map_err(|e| format!("generation: {e}"))?;
        let llm_s = started.elapsed().as_secs_f64();

        let response = validate_response(&raw, &prompt).map_err(|v| format!("contract: {v}"))?;

        let now = self.clock.now_s();
        let provenance = ProvenanceRecord {
            commit_sha: head_sha.to_string(),
            file: finding.file.clone(),
            line_range: finding.span(),
            rule_id: finding.rule_id.clone(),
            model_version: response.model_version.clone(),
            prompt_hash: prompt.prompt_hash.clone(),
            timestamp: rfc3339_from_unix(now),
        };
        let comment = ReviewComment {
            pr,
            thread_key: thread_key(&finding.file, &finding.rule_id),
            file: finding.file.clone(),
            line_start: finding.line_start,
            line_end: finding.line_end,
            rule_id: finding.rule_id.clone(),
            severity: finding.severity,
            body_md: render_comment_md(rule, &response, &provenance),
            patch: response.patch.clone(),
            provenance,
        };
        self.sink.post(&comment).map_err(|e| format!("sink: {e}"))?;
        self.audit
            .append(
                AuditEvent::CommentPosted {
                    pr,
                    thread_key: comment.thread_key.clone(),
                    file: comment.file.clone(),
                    rule_id: comment.rule_id.clone(),
                    line_start: comment.line_start,
                    line_end: comment.line_end,
                    prompt_hash: prompt.prompt_hash.clone(),
                    model_version: response.model_version.clone(),
                },
                now,
            )
            .map_err(|e| format!("audit: {e}"))?;

        Ok((
            PostedComment {
                thread_key: comment.thread_key,
                file: finding.file.clone(),
                rule_id: finding.rule_id.clone(),
                line_start: finding.line_start,
                line_end: finding.line_end,
                prompt_hash: prompt.prompt_hash,
                model_version: response.model_version,
            },
            PhaseTimings { context_s, llm_s, apply_s: 0.0, build_s: 0.0 },
        ))
    }
}
