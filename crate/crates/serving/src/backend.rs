//! Inference backends behind one trait.
//!
//! * `scripted:<dir>` replays canned responses keyed by the SHA-256 of the
//!   prompt text (benchmark fixtures).
//! * `null` always answers with a valid no-op review: grounded, no patch.
//! * `failing:<plan>` fails on a script, for fail-closed and retry tests.
//! * `http://...` forwards to a remote serving endpoint.

use crate::error::ServeError;
use grev_core::hash::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_id: String,
    #[serde(default)]
    pub params: serde_json::Value,
    pub prompt: String,
}

impl GenerationRequest {
    /// Canonical text form of the sampling params (serde_json sorts object
    /// keys), part of the L1 cache key.
    pub fn params_canonical(&self) -> String {
        serde_json::to_string(&self.params).unwrap_or_else(|_| "null".to_string())
    }

    pub fn prompt_hash(&self) -> String {
        sha256_hex(self.prompt.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
}

pub trait InferenceBackend: Send + Sync {
    fn label(&self) -> String;
    fn generate(&self, req: &GenerationRequest) -> Result<String, ServeError>;
}

/// Parse a backend spec string. Accepted forms: `null`, `scripted:<dir>`,
/// `failing:<plan>`, `http://...` / `https://...`.
pub fn backend_from_spec(spec: &str) -> Result<Arc<dyn InferenceBackend>, String> {
    if spec == "null" {
        return Ok(Arc::new(NullBackend));
    }
    if let Some(dir) = spec.strip_prefix("scripted:") {
        return Ok(Arc::new(ScriptedBackend { dir: PathBuf::from(dir) }));
    }
    if let Some(plan) = spec.strip_prefix("failing:") {
        return Ok(Arc::new(FailingBackend::parse(plan)?));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Arc::new(crate::http::HttpBackend::new(spec.to_string(), None)));
    }
    if let Some(rest) = spec.strip_prefix("http:") {
        if rest.starts_with("http://") || rest.starts_with("https://") {
            return Ok(Arc::new(crate::http::HttpBackend::new(rest.to_string(), None)));
        }
    }
    Err(format!(
        "unknown backend spec {spec:?} (expected null, scripted:<dir>, failing:<plan>, or a URL)"
    ))
}

// === scripted ===

/// Replays fixture files: `<dir>/<sha256(prompt)>.json` holds the raw reply.
pub struct ScriptedBackend {
    pub dir: PathBuf,
}

impl InferenceBackend for ScriptedBackend {
    fn label(&self) -> String {
        format!("scripted:{}", self.dir.display())
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, ServeError> {
        let hash = req.prompt_hash();
        let path = self.dir.join(format!("{hash}.json"));
        std::fs::read_to_string(&path).map_err(|_| ServeError::Backend {
            detail: format!("no scripted reply for prompt {}", &hash[..8]),
        })
    }
}

// === null ===

/// Always succeeds with a contract-valid review that recommends nothing and
/// patches nothing. The citation line is lifted from the guardrails section
/// of the prompt so the response stays grounded.
pub struct NullBackend;

pub(crate) fn first_allowed_line(prompt: &str) -> u32 {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix("Allowed citation lines: "))
        .and_then(|list| list.split(',').next())
        .and_then(|n| n.trim().parse().ok())
        .unwrap_or(1)
}

pub(crate) fn noop_reply(prompt: &str, model_version: &str) -> String {
    serde_json::json!({
        "rationale": "The flagged construct is visible at the cited line; no automated change is offered.",
        "risk": "unassessed",
        "remediation": [
            {"description": "review the cited line manually", "cited_lines": [first_allowed_line(prompt)]}
        ],
        "patch": null,
        "model_version": model_version,
    })
    .to_string()
}

impl InferenceBackend for NullBackend {
    fn label(&self) -> String {
        "null".to_string()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, ServeError> {
        Ok(noop_reply(&req.prompt, "null"))
    }
}

// === failing ===

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlanStep {
    Ok,
    Timeout,
    Conn,
    Queue,
    Backend,
}

/// Fails according to a comma-separated plan; the last step repeats forever.
/// `failing:backend` always fails; `failing:timeout,timeout,ok` fails twice
/// with a transient error and then succeeds.
pub struct FailingBackend {
    steps: Mutex<(Vec<PlanStep>, usize)>,
}

impl FailingBackend {
    pub fn parse(plan: &str) -> Result<Self, String> {
        let steps: Result<Vec<PlanStep>, String> = plan
            .split(',')
            .map(|s| match s.trim() {
                "ok" => Ok(PlanStep::Ok),
                "timeout" => Ok(PlanStep::Timeout),
                "conn" => Ok(PlanStep::Conn),
                "queue" => Ok(PlanStep::Queue),
                "backend" => Ok(PlanStep::Backend),
                other => Err(format!("unknown failing plan step {other:?}")),
            })
            .collect();
        let steps = steps?;
        if steps.is_empty() {
            return Err("empty failing plan".to_string());
        }
        Ok(Self { steps: Mutex::new((steps, 0)) })
    }
}

impl InferenceBackend for FailingBackend {
    fn label(&self) -> String {
        "failing".to_string()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, ServeError> {
        let step = {
            let mut guard = self.steps.lock().unwrap();
            let (steps, next) = &mut *guard;
            let step = steps[(*next).min(steps.len() - 1)];
            *next += 1;
            step
        };
        match step {
            PlanStep::Ok => Ok(noop_reply(&req.prompt, "failing-ok")),
            PlanStep::Timeout => Err(ServeError::Timeout { seconds: 0.0 }),
            PlanStep::Conn => Err(ServeError::Connection { detail: "injected".into() }),
            PlanStep::Queue => Err(ServeError::QueueFull),
            PlanStep::Backend => Err(ServeError::Backend { detail: "injected".into() }),
        }
    }
}
