//! Report emission: fold one or more replay runs into a single document and
//! render it as JSON (machine-readable, byte-stable across re-emission),
//! CSV (one row per profile, paper-table column order), and SVG (headline
//! reduction bars plus per-severity reduction panels).

use crate::metrics::{compute_metrics, compute_win_rates, HunkResult, MetricsError, ProfileMetrics};
use grev_core::analyzer::RuleRegistry;
use grev_core::fsutil;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "report.svg";

/// Exact CSV column set, in order. Kept stable so downstream tables diff
/// cleanly between runs.
pub const CSV_HEADER: &str =
    "Model,Setting,Reduction,NetRed,CovFrac,IntroFrac,WtdRPx,MacRPx,p50Tot,p50FF,LinesPerVio";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl ReportFormat {
    pub fn parse_list(spec: &str) -> Result<Vec<ReportFormat>, String> {
        let mut out = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let f = match part {
                "json" => ReportFormat::Json,
                "csv" => ReportFormat::Csv,
                "svg" => ReportFormat::Svg,
                other => return Err(format!("unknown report format {other:?}")),
            };
            if !out.contains(&f) {
                out.push(f);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub profiles: Vec<ProfileMetrics>,
    /// win_rates[a][b]: fraction of touched rules where profile a beats b.
    pub win_rates: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Aggregate per-profile metrics and pairwise win rates into one report.
/// Profiles come out in map (alphabetical) order.
pub fn build_report(
    runs: &BTreeMap<String, Vec<HunkResult>>,
    registry: &RuleRegistry,
) -> Result<MetricReport, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut profiles = Vec::new();
    for (profile, results) in runs {
        profiles.push(compute_metrics(results, profile, registry)?);
    }
    let win_rates =
        if runs.len() > 1 { compute_win_rates(runs)? } else { BTreeMap::new() };
    Ok(MetricReport { schema_version: 1, profiles, win_rates })
}

/// Write the requested formats under `out_dir` and return the paths written.
/// An empty format list writes nothing and succeeds.
pub fn emit_report(
    report: &MetricReport,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    if formats.is_empty() {
        return Ok(written);
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| ReportError::Io(out_dir.display().to_string(), e.to_string()))?;
    for f in formats {
        let (name, bytes) = match f {
            ReportFormat::Json => {
                let mut text =
                    serde_json::to_string_pretty(report).expect("report serializes");
                text.push('\n');
                (REPORT_JSON, text.into_bytes())
            }
            ReportFormat::Csv => (REPORT_CSV, render_csv(report).into_bytes()),
            ReportFormat::Svg => (REPORT_SVG, render_svg(report).into_bytes()),
        };
        let path = out_dir.join(name);
        fsutil::atomic_write(&path, &bytes)
            .map_err(|e| ReportError::Io(path.display().to_string(), e.to_string()))?;
        written.push(path);
    }
    Ok(written)
}

/// Split a profile label into table columns: text before the first `/` is
/// the model, the rest the setting ("default" when absent).
fn split_profile(label: &str) -> (&str, &str) {
    match label.split_once('/') {
        Some((model, setting)) if !setting.is_empty() => (model, setting),
        _ => (label, "default"),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(report: &MetricReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &report.profiles {
        let (model, setting) = split_profile(&p.profile);
        let lines_per_vio =
            p.lines_per_vio.map(|v| format!("{v:.4}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            csv_field(model),
            csv_field(setting),
            p.reduction,
            p.net_red,
            p.cov_frac,
            p.intro_frac,
            p.wtd_rpx,
            p.mac_rpx,
            p.p50_tot_s,
            p.p50_ff_s,
            lines_per_vio,
        )
        .expect("write to string");
    }
    out
}

// === svg ===

const SVG_WIDTH: f64 = 900.0;
const MARGIN: f64 = 40.0;
const BAR_H: f64 = 22.0;
const BAR_GAP: f64 = 10.0;
const PANEL_H: f64 = 120.0;
const PANEL_GAP: f64 = 24.0;
const SEVERITIES: [&str; 3] = ["High", "Medium", "Low"];
const PALETTE: [&str; 6] = ["#4878a8", "#e49444", "#5fa05a", "#c05555", "#8868b0", "#888888"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Five-number summary via nearest-rank percentiles over a non-empty sample.
fn summary(values: &[f64]) -> (f64, f64, f64, f64, f64) {
    let p = |q| crate::metrics::percentile(values, q);
    (p(0.0), p(25.0), p(50.0), p(75.0), p(100.0))
}

/// Deterministic standalone SVG: a headline reduction bar per profile, then
/// one box-and-whisker panel per severity with a box per profile drawn from
/// its per-hunk severity reduction distribution.
fn render_svg(report: &MetricReport) -> String {
    let n = report.profiles.len();
    let bars_h = n as f64 * (BAR_H + BAR_GAP);
    let panels_y = MARGIN + 30.0 + bars_h + 30.0;
    let height = panels_y + SEVERITIES.len() as f64 * (PANEL_H + PANEL_GAP) + MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {SVG_WIDTH:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{SVG_WIDTH:.0}\" height=\"{height:.0}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN:.1}\" y=\"{:.1}\" font-size=\"15\" font-weight=\"bold\">Violation reduction by profile</text>",
        MARGIN - 12.0
    );

    // Headline bars. Reduction is clamped to [0, 1] for geometry only; the
    // printed value is the real one.
    let label_w = 220.0;
    let track_w = SVG_WIDTH - MARGIN * 2.0 - label_w - 70.0;
    for (i, p) in report.profiles.iter().enumerate() {
        let y = MARGIN + 10.0 + i as f64 * (BAR_H + BAR_GAP);
        let frac = p.reduction.clamp(0.0, 1.0);
        let w = track_w * frac;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            MARGIN + label_w - 8.0,
            y + BAR_H - 7.0,
            esc(&p.profile)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{track_w:.1}\" height=\"{BAR_H:.1}\" fill=\"#eeeeee\"/>",
            MARGIN + label_w
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{BAR_H:.1}\" fill=\"{}\"/>",
            MARGIN + label_w,
            color(i)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\">{:.4}</text>",
            MARGIN + label_w + track_w + 8.0,
            y + BAR_H - 7.0,
            p.reduction
        );
    }

    // Severity panels: x spans [-1, 1] in reduction-ratio units.
    let panel_x = MARGIN + label_w;
    let panel_w = track_w;
    let x_of = |v: f64| panel_x + (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * panel_w;
    for (si, sev) in SEVERITIES.iter().enumerate() {
        let top = panels_y + si as f64 * (PANEL_H + PANEL_GAP);
        let _ = writeln!(
            s,
            "<text x=\"{MARGIN:.1}\" y=\"{:.1}\" font-weight=\"bold\">{sev} severity reduction</text>",
            top - 6.0
        );
        let _ = writeln!(
            s,
            "<rect x=\"{panel_x:.1}\" y=\"{top:.1}\" width=\"{panel_w:.1}\" height=\"{PANEL_H:.1}\" \
             fill=\"none\" stroke=\"#cccccc\"/>"
        );
        for (gv, gl) in [(-1.0, "-1"), (0.0, "0"), (1.0, "1")] {
            let gx = x_of(gv);
            let _ = writeln!(
                s,
                "<line x1=\"{gx:.1}\" y1=\"{top:.1}\" x2=\"{gx:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>",
                top + PANEL_H
            );
            let _ = writeln!(
                s,
                "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#666666\">{gl}</text>",
                top + PANEL_H + 14.0
            );
        }
        let row_h = PANEL_H / n.max(1) as f64;
        for (i, p) in report.profiles.iter().enumerate() {
            let cy = top + row_h * (i as f64 + 0.5);
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                panel_x - 8.0,
                cy + 4.0,
                esc(&p.profile)
            );
            match p.severity_reductions.get(*sev) {
                Some(values) => {
                    let (lo, q1, med, q3, hi) = summary(values);
                    let half = (row_h * 0.3).min(10.0);
                    let _ = writeln!(
                        s,
                        "<line x1=\"{:.1}\" y1=\"{cy:.1}\" x2=\"{:.1}\" y2=\"{cy:.1}\" stroke=\"{}\"/>",
                        x_of(lo),
                        x_of(hi),
                        color(i)
                    );
                    let _ = writeln!(
                        s,
                        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\" fill-opacity=\"0.35\" stroke=\"{}\"/>",
                        x_of(q1),
                        cy - half,
                        (x_of(q3) - x_of(q1)).max(1.0),
                        half * 2.0,
                        color(i),
                        color(i)
                    );
                    let _ = writeln!(
                        s,
                        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
                        x_of(med),
                        cy - half,
                        x_of(med),
                        cy + half,
                        color(i)
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#999999\">no data</text>",
                        panel_x + 8.0,
                        cy + 4.0
                    );
                }
            }
            let intro = p
                .severity_introductions
                .get(*sev)
                .map(|v| v.len())
                .unwrap_or(0);
            if intro > 0 {
                let _ = writeln!(
                    s,
                    "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#c05555\">+{intro} introduced</text>",
                    panel_x + panel_w + 8.0,
                    cy + 4.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
