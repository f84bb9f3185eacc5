//! Every aggregate the metrics module reports is recomputed here from
//! scratch, straight from the formulas, and compared against the
//! implementation over randomized result sets. The brute-force side shares
//! no helpers with the implementation: per-rule sums are re-derived with
//! integer arithmetic, percentiles use counting selection instead of rank
//! arithmetic over a sort, and severities come from a local table.

use grev_bench::metrics::{
    compute_metrics, compute_win_rates, derive_status, percentile, HunkResult, HunkStatus,
    ProfileMetrics,
};
use grev_core::analyzer::RuleRegistry;
use grev_core::model::{DiffStats, PhaseTimings};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const TOL: f64 = 1e-9;
const RULES: [&str; 6] = ["MC-1", "MC-2", "MC-3", "MC-4", "MC-5", "MC-6"];

/// Local severity table, deliberately not read from the registry so a
/// registry regression cannot hide from the panel checks.
fn severity_name(rule: &str) -> &'static str {
    match rule {
        "MC-1" | "MC-5" => "High",
        "MC-2" | "MC-3" | "MC-4" => "Medium",
        "MC-6" => "Low",
        _ => "Unknown",
    }
}

fn status_name(status: HunkStatus) -> &'static str {
    match status {
        HunkStatus::Fixed => "fixed",
        HunkStatus::PartiallyFixed => "partially_fixed",
        HunkStatus::Unchanged => "unchanged",
        HunkStatus::Regressed => "regressed",
        HunkStatus::Introduced => "introduced",
        HunkStatus::Error => "error",
    }
}

fn approx(got: f64, want: f64, what: &str) {
    assert!((got - want).abs() <= TOL, "{what}: implementation {got} vs brute force {want}");
}

fn random_violations(rng: &mut ChaCha8Rng, presence: f64) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for rule in RULES {
        if rng.gen_bool(presence) {
            out.insert(rule.to_string(), rng.gen_range(1..=3));
        }
    }
    out
}

fn random_results(rng: &mut ChaCha8Rng, ids: &[String]) -> Vec<HunkResult> {
    ids.iter()
        .map(|id| {
            let pre = random_violations(rng, 0.35);
            let post = random_violations(rng, 0.30);
            // Coarse timings so duplicate totals occur and exercise
            // percentile ties; occasionally a fully instant hunk.
            let coarse =
                |rng: &mut ChaCha8Rng| (rng.gen_range(0..=40) as f64) / 4.0;
            let timings = if rng.gen_bool(0.1) {
                PhaseTimings::default()
            } else {
                PhaseTimings {
                    context_s: coarse(rng),
                    llm_s: coarse(rng),
                    apply_s: coarse(rng),
                    build_s: coarse(rng),
                }
            };
            let status = if rng.gen_bool(0.1) {
                HunkStatus::Error
            } else {
                derive_status(&pre, &post)
            };
            HunkResult {
                hunk_id: id.clone(),
                scenario_id: format!("s-{id}"),
                status,
                pre_violations: pre,
                post_violations: post,
                diff_stats: DiffStats { added: rng.gen_range(0..5), removed: rng.gen_range(0..5) },
                timings,
                patches_offered: rng.gen_range(0..3),
                patches_applied: rng.gen_range(0..2),
                fix_lines_changed: rng.gen_range(0..=8),
                generation_failures: rng.gen_range(0..2),
                failure: None,
            }
        })
        .collect()
}

/// k-th smallest (1-based) by counting, no sorting: v is the answer iff
/// fewer than k values are strictly below it and at least k are <= it.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&u| u < v).count();
        let at_or_below = values.iter().filter(|&&u| u <= v).count();
        if below < k && k <= at_or_below {
            return v;
        }
    }
    panic!("k={k} out of range for {} values", values.len());
}

fn brute_percentile(values: &[f64], p: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len();
    let rank = ((p * n).div_ceil(100)).clamp(1, n);
    kth_smallest(values, rank)
}

fn check_against_brute_force(tag: &str, results: &[HunkResult], m: &ProfileMetrics) {
    let mut rules: BTreeSet<String> = BTreeSet::new();
    for r in results {
        rules.extend(r.pre_violations.keys().cloned());
        rules.extend(r.post_violations.keys().cloned());
    }
    let sum_pre = |rule: &str| -> i64 {
        results.iter().map(|r| *r.pre_violations.get(rule).unwrap_or(&0) as i64).sum()
    };
    let sum_post = |rule: &str| -> i64 {
        results.iter().map(|r| *r.post_violations.get(rule).unwrap_or(&0) as i64).sum()
    };

    let mut denom = 0i64;
    let mut signed = 0i64;
    let mut clamped = 0i64;
    let mut introduced_new = 0i64;
    let mut pre_rules = 0usize;
    let mut covered = 0usize;
    let mut increased = 0usize;
    let mut mac_sum = 0.0f64;
    for rule in &rules {
        let p = sum_pre(rule);
        let q = sum_post(rule);
        if p > 0 {
            pre_rules += 1;
            denom += p;
            signed += p - q;
            clamped += (p - q).max(0);
            if q < p {
                covered += 1;
            }
            mac_sum += (p - q) as f64 / p as f64;
        } else {
            introduced_new += q;
        }
        if q > p {
            increased += 1;
        }
    }
    let reduction = if denom > 0 { signed as f64 / denom as f64 } else { 0.0 };
    approx(m.reduction, reduction, &format!("{tag} reduction"));
    let net_red =
        if denom > 0 { reduction - introduced_new as f64 / denom as f64 } else { 0.0 };
    approx(m.net_red, net_red, &format!("{tag} net_red"));
    let cov_frac = if pre_rules == 0 { 0.0 } else { covered as f64 / pre_rules as f64 };
    approx(m.cov_frac, cov_frac, &format!("{tag} cov_frac"));
    let intro_frac = if rules.is_empty() { 0.0 } else { increased as f64 / rules.len() as f64 };
    approx(m.intro_frac, intro_frac, &format!("{tag} intro_frac"));
    let wtd_rpx = if denom > 0 { clamped as f64 / denom as f64 } else { 0.0 };
    approx(m.wtd_rpx, wtd_rpx, &format!("{tag} wtd_rpx"));
    let mac_rpx = if pre_rules == 0 { 0.0 } else { mac_sum / pre_rules as f64 };
    approx(m.mac_rpx, mac_rpx, &format!("{tag} mac_rpx"));

    let fix_lines: i64 = results.iter().map(|r| r.fix_lines_changed as i64).sum();
    match (m.lines_per_vio, clamped > 0) {
        (Some(got), true) => {
            approx(got, fix_lines as f64 / clamped as f64, &format!("{tag} lines_per_vio"))
        }
        (None, false) => {}
        (got, _) => panic!("{tag} lines_per_vio: implementation {got:?}, brute force clamped={clamped}"),
    }

    let totals: Vec<f64> = results
        .iter()
        .map(|r| r.timings.context_s + r.timings.llm_s + r.timings.apply_s + r.timings.build_s)
        .collect();
    let feedback: Vec<f64> = results.iter().map(|r| r.timings.llm_s + r.timings.build_s).collect();
    approx(m.p50_tot_s, brute_percentile(&totals, 50), &format!("{tag} p50_tot_s"));
    approx(m.p95_tot_s, brute_percentile(&totals, 95), &format!("{tag} p95_tot_s"));
    approx(m.p50_ff_s, brute_percentile(&feedback, 50), &format!("{tag} p50_ff_s"));

    let wall: f64 = totals.iter().sum();
    let throughput = if wall > 0.0 { 3600.0 * results.len() as f64 / wall } else { 0.0 };
    let thr_tol = TOL * throughput.abs().max(1.0);
    assert!(
        (m.throughput_hunks_per_hour - throughput).abs() <= thr_tol,
        "{tag} throughput: {} vs {throughput}",
        m.throughput_hunks_per_hour
    );

    let mut sev_red: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut sev_intro: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        let mut pre_by: BTreeMap<&str, i64> = BTreeMap::new();
        let mut post_by: BTreeMap<&str, i64> = BTreeMap::new();
        for (rule, &c) in &r.pre_violations {
            *pre_by.entry(severity_name(rule)).or_insert(0) += c as i64;
        }
        for (rule, &c) in &r.post_violations {
            *post_by.entry(severity_name(rule)).or_insert(0) += c as i64;
        }
        let sevs: BTreeSet<&str> = pre_by.keys().chain(post_by.keys()).copied().collect();
        for sev in sevs {
            let pre = pre_by.get(sev).copied().unwrap_or(0);
            let post = post_by.get(sev).copied().unwrap_or(0);
            if pre > 0 {
                sev_red.entry(sev.to_string()).or_default().push((pre - post) as f64 / pre as f64);
            } else if post > 0 {
                sev_intro.entry(sev.to_string()).or_default().push(1.0);
            }
        }
    }
    assert_eq!(
        m.severity_reductions.keys().collect::<Vec<_>>(),
        sev_red.keys().collect::<Vec<_>>(),
        "{tag} severity_reductions keys"
    );
    for (sev, want) in &sev_red {
        let got = &m.severity_reductions[sev];
        assert_eq!(got.len(), want.len(), "{tag} severity_reductions[{sev}] length");
        for (g, w) in got.iter().zip(want) {
            approx(*g, *w, &format!("{tag} severity_reductions[{sev}]"));
        }
    }
    assert_eq!(m.severity_introductions, sev_intro, "{tag} severity_introductions");

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in results {
        *counts.entry(status_name(r.status).to_string()).or_insert(0) += 1;
    }
    assert_eq!(m.status_counts, counts, "{tag} status_counts");
    assert_eq!(m.hunks, results.len(), "{tag} hunks");
}

#[test]
fn metrics_match_a_brute_force_recomputation_on_random_sets() {
    let registry = RuleRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for case in 0..200 {
        let n = rng.gen_range(1..=30);
        let ids: Vec<String> = (0..n).map(|i| format!("h{i:03}")).collect();
        let results = random_results(&mut rng, &ids);
        let m = compute_metrics(&results, "probe", &registry).unwrap();
        check_against_brute_force(&format!("case {case}"), &results, &m);
    }
}

#[test]
fn win_rates_match_a_brute_force_recomputation_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    for case in 0..200 {
        let n_profiles = rng.gen_range(2..=4);
        let n_hunks = rng.gen_range(1..=20);
        let ids: Vec<String> = (0..n_hunks).map(|i| format!("h{i:03}")).collect();
        let mut runs: BTreeMap<String, Vec<HunkResult>> = BTreeMap::new();
        for p in 0..n_profiles {
            runs.insert(format!("profile-{p}"), random_results(&mut rng, &ids));
        }
        let rates = compute_win_rates(&runs).unwrap();

        // Brute force, straight from the definition.
        let mut touched: BTreeMap<&String, BTreeSet<String>> = BTreeMap::new();
        for (profile, results) in &runs {
            let mut t = BTreeSet::new();
            for r in results.iter().filter(|r| r.fix_lines_changed > 0) {
                t.extend(r.pre_violations.keys().cloned());
                t.extend(r.post_violations.keys().cloned());
            }
            touched.insert(profile, t);
        }
        let union: BTreeSet<String> = touched.values().flatten().cloned().collect();
        let score = |results: &[HunkResult], rule: &str| -> f64 {
            let p: i64 =
                results.iter().map(|r| *r.pre_violations.get(rule).unwrap_or(&0) as i64).sum();
            let q: i64 =
                results.iter().map(|r| *r.post_violations.get(rule).unwrap_or(&0) as i64).sum();
            if p > 0 {
                (p - q) as f64 / p as f64
            } else if q == 0 {
                0.0
            } else {
                -(q as f64)
            }
        };
        for (a, ra) in &runs {
            for (b, rb) in &runs {
                if a == b {
                    assert!(rates.get(a).map_or(true, |row| !row.contains_key(b)));
                    continue;
                }
                let wins = union
                    .iter()
                    .filter(|rule| {
                        touched[a].contains(*rule)
                            && touched[b].contains(*rule)
                            && score(ra, rule) > score(rb, rule)
                    })
                    .count();
                let want =
                    if union.is_empty() { 0.0 } else { wins as f64 / union.len() as f64 };
                approx(rates[a][b], want, &format!("case {case} win_rate[{a}][{b}]"));
            }
        }
        // Wins in both directions cannot exceed the whole union.
        for (a, _) in &runs {
            for (b, _) in &runs {
                if a < b {
                    assert!(rates[a][b] + rates[b][a] <= 1.0 + TOL, "case {case} {a}/{b}");
                }
            }
        }
    }
}

#[test]
fn percentile_matches_counting_selection_on_random_samples() {
    // Lemma: on the whole test domain the implementation's float rank
    // arithmetic agrees with exact integer ceiling division, so the two
    // sides below genuinely pick the same rank or the comparison fails.
    for p in 1..=100usize {
        for n in 1..=100usize {
            let float_rank = ((p as f64 * n as f64) / 100.0).ceil() as usize;
            assert_eq!(float_rank, (p * n).div_ceil(100), "rank arithmetic at p={p} n={n}");
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    for case in 0..500 {
        let n = rng.gen_range(1..=64);
        // One decimal place so ties are common.
        let values: Vec<f64> =
            (0..n).map(|_| (rng.gen_range(0..200) as f64) / 10.0).collect();
        let p = rng.gen_range(1..=100usize);
        let got = percentile(&values, p as f64);
        let want = brute_percentile(&values, p);
        assert_eq!(got, want, "case {case}: p{p} over {values:?}");
    }

    assert_eq!(percentile(&[], 50.0), 0.0);
    assert_eq!(percentile(&[7.5], 1.0), 7.5);
    assert_eq!(percentile(&[7.5], 100.0), 7.5);
}
