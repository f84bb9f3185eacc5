//! Per-repo build configuration: `buildconfig.json` at the workspace root
//! names the toolchain, the commands that must succeed before analysis
//! counts, the analysis standard the repo opted into, and whether findings
//! are scoped to the diff.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::process::Command;

pub const BUILD_CONFIG_FILE: &str = "buildconfig.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub toolchain: String,
    /// Shell commands run in the workspace root, in order, stopping at the
    /// first failure.
    pub build_cmds: Vec<String>,
    pub analysis_standard: String,
    /// When true only findings intersecting the PR diff are reviewed; the
    /// full-tree report is still produced for the audit trail.
    pub diff_scoped: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            toolchain: "none".into(),
            build_cmds: Vec::new(),
            analysis_standard: "mini-c-safety".into(),
            diff_scoped: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildConfigError {
    #[error("build config {0}: {1}")]
    Io(String, String),
    #[error("build config {0} is invalid: {1}")]
    Parse(String, String),
}

impl BuildConfig {
    /// Load the workspace override; defaults when the file is absent.
    pub fn load(root: &Path) -> Result<Self, BuildConfigError> {
        let path = root.join(BUILD_CONFIG_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let display = path.display().to_string();
        let bytes =
            std::fs::read(&path).map_err(|e| BuildConfigError::Io(display.clone(), e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| BuildConfigError::Parse(display, e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub ok: bool,
    /// Wall seconds across all commands.
    pub build_s: f64,
    /// Commands actually run (stops after the first failure).
    pub ran: Vec<String>,
    /// Combined stdout/stderr tail of the failing command, empty on success.
    pub failure_log: String,
}

/// Run the configured build commands in `root`. No commands means a
/// trivially successful build.
pub fn run_build(root: &Path, config: &BuildConfig) -> BuildOutcome {
    let started = std::time::Instant::now();
    let mut outcome = BuildOutcome { ok: true, ..Default::default() };
    for cmd in &config.build_cmds {
        outcome.ran.push(cmd.clone());
        let result = Command::new("sh").arg("-c").arg(cmd).current_dir(root).output();
        match result {
            Ok(out) if out.status.success() => {}
            Ok(out) => {
                outcome.ok = false;
                let mut log = String::from_utf8_lossy(&out.stdout).into_owned();
                log.push_str(&String::from_utf8_lossy(&out.stderr));
                let tail_from = log.len().saturating_sub(2000);
                outcome.failure_log = format!("{cmd}: exit {:?}\n{}", out.status.code(), &log[tail_from..]);
                break;
            }
            Err(e) => {
                outcome.ok = false;
                outcome.failure_log = format!("{cmd}: spawn failed: {e}");
                break;
            }
        }
    }
    outcome.build_s = started.elapsed().as_secs_f64();
    outcome
}
