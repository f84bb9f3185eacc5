//! Outcome classification and metric aggregation over replay results.
//!
//! The headline numbers come from global per-rule sums across a profile's
//! hunks: P(r) = total pre-fix count, Q(r) = total post-fix count. Reduction
//! and MacRPx keep negative per-rule deltas (a fix that makes a rule worse
//! subtracts), while WtdRPx clamps them at zero and so reads as an
//! upper-bound recall proxy. Both behaviors are deliberate and tested.

use grev_core::analyzer::RuleRegistry;
use grev_core::model::{DiffStats, PhaseTimings};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HunkStatus {
    Fixed,
    PartiallyFixed,
    Unchanged,
    Regressed,
    Introduced,
    Error,
}

/// One line of `results-<profile>.jsonl`: the raw outcome of replaying a
/// single hunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HunkResult {
    pub hunk_id: String,
    pub scenario_id: String,
    pub status: HunkStatus,
    pub pre_violations: BTreeMap<String, u32>,
    pub post_violations: BTreeMap<String, u32>,
    /// Shape of the scenario diff that created the hunk.
    pub diff_stats: DiffStats,
    pub timings: PhaseTimings,
    pub patches_offered: u32,
    pub patches_applied: u32,
    /// added + removed across applied fix patches.
    pub fix_lines_changed: u32,
    pub generation_failures: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Classify a hunk purely from its violation vectors. `Error` is never
/// derived here; the replay harness assigns it for infrastructure failures.
///
/// Precedence: a new rule anywhere makes the hunk Introduced, even when the
/// totals otherwise improved.
pub fn derive_status(pre: &BTreeMap<String, u32>, post: &BTreeMap<String, u32>) -> HunkStatus {
    let pre: BTreeMap<&str, u32> =
        pre.iter().filter(|(_, &c)| c > 0).map(|(k, &c)| (k.as_str(), c)).collect();
    let post: BTreeMap<&str, u32> =
        post.iter().filter(|(_, &c)| c > 0).map(|(k, &c)| (k.as_str(), c)).collect();
    if post.keys().any(|r| !pre.contains_key(r)) {
        return HunkStatus::Introduced;
    }
    if pre == post {
        return HunkStatus::Unchanged;
    }
    let total_pre: u64 = pre.values().map(|&c| c as u64).sum();
    let total_post: u64 = post.values().map(|&c| c as u64).sum();
    if total_post == 0 {
        HunkStatus::Fixed
    } else if total_post < total_pre {
        HunkStatus::PartiallyFixed
    } else {
        // Equal totals with a different spread still means something got
        // worse; group it with regressions.
        HunkStatus::Regressed
    }
}

/// Nearest-rank percentile: the smallest value with at least p percent of
/// the sample at or below it. No interpolation, so results are identical
/// across implementations. Empty input yields 0.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("percentile input must not contain NaN"));
    // Multiply before dividing: p * n is exact for integral p, so ranks at
    // exact boundaries (e.g. p7 of 100 samples) never round up one place.
    let rank = ((p * sorted.len() as f64) / 100.0).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetrics {
    pub profile: String,
    pub hunks: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub reduction: f64,
    pub net_red: f64,
    pub cov_frac: f64,
    pub intro_frac: f64,
    pub wtd_rpx: f64,
    pub mac_rpx: f64,
    pub p50_tot_s: f64,
    pub p95_tot_s: f64,
    pub p50_ff_s: f64,
    /// Changed fix lines per removed violation; absent when nothing was
    /// removed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines_per_vio: Option<f64>,
    /// Per-severity distributions of per-hunk reduction ratios, one panel
    /// per severity; hunks with no pre or post counts at a severity are
    /// excluded from that panel.
    pub severity_reductions: BTreeMap<String, Vec<f64>>,
    /// Per-severity 1.0 entries for hunks that introduced violations at a
    /// severity with a clean pre side.
    pub severity_introductions: BTreeMap<String, Vec<f64>>,
    pub throughput_hunks_per_hour: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("profiles replayed different hunk sets: {detail}")]
    MismatchedHunkSets { detail: String },
}

/// Global per-rule pre/post sums for one profile's results.
fn rule_sums(results: &[HunkResult]) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
    let mut p: BTreeMap<String, u64> = BTreeMap::new();
    let mut q: BTreeMap<String, u64> = BTreeMap::new();
    for r in results {
        for (rule, &c) in &r.pre_violations {
            *p.entry(rule.clone()).or_insert(0) += c as u64;
        }
        for (rule, &c) in &r.post_violations {
            *q.entry(rule.clone()).or_insert(0) += c as u64;
        }
    }
    (p, q)
}

pub fn compute_metrics(
    results: &[HunkResult],
    profile: &str,
    registry: &RuleRegistry,
) -> Result<ProfileMetrics, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (p, q) = rule_sums(results);
    let lookup = |m: &BTreeMap<String, u64>, r: &str| m.get(r).copied().unwrap_or(0);
    let all_rules: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let rules_pre: Vec<&String> = all_rules.iter().copied().filter(|r| lookup(&p, r) > 0).collect();
    let denom_p: u64 = rules_pre.iter().map(|r| lookup(&p, r)).sum();

    let signed_removed: f64 = rules_pre
        .iter()
        .map(|r| lookup(&p, r) as f64 - lookup(&q, r) as f64)
        .sum();
    let reduction = if denom_p > 0 { signed_removed / denom_p as f64 } else { 0.0 };

    let introduced_new: u64 =
        all_rules.iter().filter(|r| lookup(&p, r) == 0).map(|r| lookup(&q, r)).sum();
    let net_red =
        if denom_p > 0 { reduction - introduced_new as f64 / denom_p as f64 } else { 0.0 };

    let covered = rules_pre.iter().filter(|r| lookup(&q, r) < lookup(&p, r)).count();
    let cov_frac = if rules_pre.is_empty() { 0.0 } else { covered as f64 / rules_pre.len() as f64 };

    let increased = all_rules.iter().filter(|r| lookup(&q, r) > lookup(&p, r)).count();
    let intro_frac =
        if all_rules.is_empty() { 0.0 } else { increased as f64 / all_rules.len() as f64 };

    let clamped_removed: u64 =
        rules_pre.iter().map(|r| lookup(&p, r).saturating_sub(lookup(&q, r))).sum();
    let wtd_rpx = if denom_p > 0 { clamped_removed as f64 / denom_p as f64 } else { 0.0 };

    let mac_rpx = if rules_pre.is_empty() {
        0.0
    } else {
        rules_pre
            .iter()
            .map(|r| (lookup(&p, r) as f64 - lookup(&q, r) as f64) / lookup(&p, r) as f64)
            .sum::<f64>()
            / rules_pre.len() as f64
    };

    // Severity panels: per-hunk ratios bucketed by rule severity.
    let mut severity_reductions: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut severity_introductions: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let severity_name = |rule: &str| {
        registry
            .severity_of(rule)
            .map(|s| s.to_string())
            .unwrap_or_else(|| "Unknown".to_string())
    };
    for result in results {
        let mut pre_by_sev: BTreeMap<String, u64> = BTreeMap::new();
        let mut post_by_sev: BTreeMap<String, u64> = BTreeMap::new();
        for (rule, &c) in &result.pre_violations {
            *pre_by_sev.entry(severity_name(rule)).or_insert(0) += c as u64;
        }
        for (rule, &c) in &result.post_violations {
            *post_by_sev.entry(severity_name(rule)).or_insert(0) += c as u64;
        }
        let sevs: BTreeSet<String> =
            pre_by_sev.keys().chain(post_by_sev.keys()).cloned().collect();
        for sev in sevs {
            let pre = pre_by_sev.get(&sev).copied().unwrap_or(0);
            let post = post_by_sev.get(&sev).copied().unwrap_or(0);
            if pre > 0 {
                severity_reductions
                    .entry(sev)
                    .or_default()
                    .push((pre as f64 - post as f64) / pre as f64);
            } else if post > 0 {
                severity_introductions.entry(sev).or_default().push(1.0);
            }
            // pre == post == 0 is excluded by construction.
        }
    }

    let totals: Vec<f64> = results.iter().map(|r| r.timings.total_s()).collect();
    let feedback: Vec<f64> = results.iter().map(|r| r.timings.first_feedback_s()).collect();
    let total_s: f64 = totals.iter().sum();

    let fix_lines: u64 = results.iter().map(|r| r.fix_lines_changed as u64).sum();
    let lines_per_vio =
        if clamped_removed > 0 { Some(fix_lines as f64 / clamped_removed as f64) } else { None };

    let mut status_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in results {
        let key = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .expect("status serializes as a string");
        *status_counts.entry(key).or_insert(0) += 1;
    }

    Ok(ProfileMetrics {
        profile: profile.to_string(),
        hunks: results.len(),
        status_counts,
        reduction,
        net_red,
        cov_frac,
        intro_frac,
        wtd_rpx,
        mac_rpx,
        p50_tot_s: percentile(&totals, 50.0),
        p95_tot_s: percentile(&totals, 95.0),
        p50_ff_s: percentile(&feedback, 50.0),
        lines_per_vio,
        severity_reductions,
        severity_introductions,
        throughput_hunks_per_hour: if total_s > 0.0 {
            3600.0 * results.len() as f64 / total_s
        } else {
            0.0
        },
    })
}

/// Rules a profile touched: any rule present (pre or post) in a hunk whose
/// fix actually changed lines.
fn touched_rules(results: &[HunkResult]) -> BTreeSet<String> {
    let mut touched = BTreeSet::new();
    for r in results.iter().filter(|r| r.fix_lines_changed > 0) {
        touched.extend(r.pre_violations.keys().cloned());
        touched.extend(r.post_violations.keys().cloned());
    }
    touched
}

/// Pairwise union-normalized win rates. For every ordered pair (A, B):
/// count rules where both profiles touched the rule and A's per-rule score
/// beats B's, over the union of rules touched by any profile. Untouched
/// rules are neutral, so all rates live in [0, 1] and WinRate(A,B) +
/// WinRate(B,A) <= 1.
pub fn compute_win_rates(
    results_by_profile: &BTreeMap<String, Vec<HunkResult>>,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>, MetricsError> {
    if results_by_profile.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut hunk_sets: Vec<(&String, BTreeSet<&String>)> = Vec::new();
    for (profile, results) in results_by_profile {
        hunk_sets.push((profile, results.iter().map(|r| &r.hunk_id).collect()));
    }
    for pair in hunk_sets.windows(2) {
        if pair[0].1 != pair[1].1 {
            return Err(MetricsError::MismatchedHunkSets {
                detail: format!("{} vs {}", pair[0].0, pair[1].0),
            });
        }
    }

    let mut union: BTreeSet<String> = BTreeSet::new();
    let mut touched: BTreeMap<&String, BTreeSet<String>> = BTreeMap::new();
    let mut scores: BTreeMap<&String, BTreeMap<String, f64>> = BTreeMap::new();
    for (profile, results) in results_by_profile {
        let t = touched_rules(results);
        union.extend(t.iter().cloned());
        let (p, q) = rule_sums(results);
        let mut score = BTreeMap::new();
        for rule in p.keys().chain(q.keys()) {
            let pv = p.get(rule).copied().unwrap_or(0) as f64;
            let qv = q.get(rule).copied().unwrap_or(0) as f64;
            let s = if pv > 0.0 {
                (pv - qv) / pv
            } else if qv == 0.0 {
                0.0
            } else {
                -qv
            };
            score.insert(rule.clone(), s);
        }
        touched.insert(profile, t);
        scores.insert(profile, score);
    }

    let mut rates: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (a, _) in results_by_profile {
        for (b, _) in results_by_profile {
            if a == b {
                continue;
            }
            let wins = union
                .iter()
                .filter(|rule| {
                    touched[a].contains(*rule)
                        && touched[b].contains(*rule)
                        && scores[a].get(*rule).copied().unwrap_or(0.0)
                            > scores[b].get(*rule).copied().unwrap_or(0.0)
                })
                .count();
            let rate = if union.is_empty() { 0.0 } else { wins as f64 / union.len() as f64 };
            rates.entry(a.clone()).or_default().insert(b.clone(), rate);
        }
    }
    Ok(rates)
}
