//! The isotropic-Gaussian counter-example without refreshment and the
//! invariant family of the radial process.

use bouncy::estimators::{radial_simulate, reducibility_witness, sample_invariant_family, RadialState};
use bouncy::stats::ks_two_sample;
use serde_json::json;

use super::{collect, par_map, stream, timed, RunOutput};
use crate::config::ExperimentConfig;
use crate::output::{num, Check, Outcome, ReplicateSummary, Table, Tallies};

/// Bounces simulated without refreshment when no budget is configured.
pub const DEFAULT_WITNESS_EVENTS: u64 = 200;

/// Allowed dip below the unit circle due to rounding.
pub const NORM_TOLERANCE: f64 = 1e-9;

pub(super) fn reducibility(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let rate = config.refresh_rate();
    let events = config
        .run
        .events
        .unwrap_or(if rate == 0.0 { DEFAULT_WITNESS_EVENTS } else { u64::MAX });
    let horizon = config.horizon();
    let reps: Vec<usize> = (0..config.replicates()).collect();
    let runs = par_map(&reps, |&i| {
        let (res, seconds) = timed(|| reducibility_witness(events, rate, horizon, &mut stream(config.seed(), i, 0)));
        let summary = match res {
            Ok(r) => {
                let tallies = Tallies {
                    events: r.bounces + r.refreshes,
                    bounces: r.bounces,
                    refreshes: r.refreshes,
                    rejections: 0,
                };
                let mut s = ReplicateSummary::ok("witness", i, tallies);
                s.extra = json!({
                    "min_norm": r.min_norm,
                    "final_time": r.final_time,
                    "recursion_error": r.recursion_error,
                    "descent_persists": r.descent_persists,
                });
                s
            }
            Err(e) => ReplicateSummary::failed("witness", i, e),
        };
        RunOutput {
            summary,
            tables: Vec::new(),
            seconds,
        }
    });

    let field = |r: &RunOutput, k: &str| r.summary.extra[k].as_f64().unwrap_or(f64::NAN);
    let ok = runs.iter().all(|r| r.summary.is_ok());
    let min_norm = runs.iter().map(|r| field(r, "min_norm")).fold(f64::INFINITY, f64::min);
    let max_norm = runs.iter().map(|r| field(r, "min_norm")).fold(f64::NEG_INFINITY, f64::max);
    let recursion = runs.iter().map(|r| field(r, "recursion_error")).fold(0.0, f64::max);
    let persists = runs.iter().all(|r| r.summary.extra["descent_persists"].as_bool() == Some(true));
    let checks = if rate == 0.0 {
        vec![
            Check::new(
                "min_norm_at_least_one",
                ok && min_norm >= 1.0 - NORM_TOLERANCE,
                format!("smallest path norm {min_norm}"),
            ),
            Check::new(
                "bounce_recursion_holds",
                ok && recursion < NORM_TOLERANCE && persists,
                format!("largest recursion error {recursion:e}; descent persists: {persists}"),
            ),
        ]
    } else {
        vec![Check::new(
            "refreshment_enters_unit_ball",
            ok && max_norm < 1.0,
            format!("largest per-replicate path-norm minimum {max_norm} by time {horizon}"),
        )]
    };
    let results = json!({
        "refresh_rate": rate,
        "events": (events != u64::MAX).then_some(events),
        "horizon": horizon.is_finite().then_some(horizon),
        "min_norm": min_norm,
        "recursion_error": recursion,
        "descent_persists": persists,
    });
    let c = collect(runs);
    Ok(Outcome {
        results,
        replicates: c.replicates,
        checks,
        tables: c.tables,
        timings: c.timings,
    })
}

/// Draws per invariant law when `model.samples` is absent.
pub const DEFAULT_RADIAL_SAMPLES: usize = 10_000;

/// Level of the two-sample Kolmogorov-Smirnov tests.
pub const KS_LEVEL: f64 = 0.01;

pub(super) fn radial_invariance(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let ks_values = config.model.k_values.clone().unwrap_or_else(|| vec![2, 3, 5]);
    let n = config.model.samples.unwrap_or(DEFAULT_RADIAL_SAMPLES);
    let horizon = config.horizon();
    let jobs: Vec<(usize, usize)> = (0..ks_values.len())
        .flat_map(|j| (0..config.replicates()).map(move |i| (j, i)))
        .collect();

    let runs = par_map(&jobs, |&(j, i)| {
        let k = ks_values[j];
        let label = format!("k{k}");
        let (res, seconds) = timed(|| -> anyhow::Result<(ReplicateSummary, [Vec<f64>; 4])> {
            let mut rng = stream(config.seed(), i, j as u64);
            let (mut end_r, mut end_m, mut fresh_r, mut fresh_m) = (vec![], vec![], vec![], vec![]);
            let mut jumps = 0u64;
            for _ in 0..n {
                let s = sample_invariant_family(k, &mut rng)?;
                let traj = radial_simulate(RadialState::new(s.r, s.m)?, horizon, &mut rng)?;
                jumps += traj.jumps.len() as u64;
                end_r.push(traj.end.r);
                end_m.push(traj.end.m);
                let f = sample_invariant_family(k, &mut rng)?;
                fresh_r.push(f.r);
                fresh_m.push(f.m);
            }
            let tallies = Tallies {
                events: jumps,
                bounces: jumps,
                ..Tallies::default()
            };
            let ks_r = ks_two_sample(&end_r, &fresh_r, KS_LEVEL);
            let ks_m = ks_two_sample(&end_m, &fresh_m, KS_LEVEL);
            let mut summary = ReplicateSummary::ok(&label, i, tallies);
            summary.extra = json!({
                "k": k,
                "ks_r": ks_r.statistic,
                "ks_m": ks_m.statistic,
                "critical": ks_r.critical,
                "passes": ks_r.passes() && ks_m.passes(),
            });
            Ok((summary, [end_r, end_m, fresh_r, fresh_m]))
        });
        match res {
            Ok((summary, samples)) => (
                RunOutput {
                    summary,
                    tables: Vec::new(),
                    seconds,
                },
                Some(samples),
            ),
            Err(e) => (
                RunOutput {
                    summary: ReplicateSummary::failed(label, i, e),
                    tables: Vec::new(),
                    seconds,
                },
                None,
            ),
        }
    });

    let mut table = Table::new("radial.csv", ["k", "replicate", "source", "r", "m"]);
    for ((run, samples), &(j, i)) in runs.iter().zip(&jobs) {
        if let (Some([end_r, end_m, fresh_r, fresh_m]), true) = (samples, run.summary.is_ok()) {
            for (source, rs, ms) in [("simulated", end_r, end_m), ("fresh", fresh_r, fresh_m)] {
                for (r, m) in rs.iter().zip(ms) {
                    table.push(vec![ks_values[j].to_string(), i.to_string(), source.into(), num(*r), num(*m)]);
                }
            }
        }
    }
    let runs: Vec<RunOutput> = runs.into_iter().map(|(r, _)| r).collect();
    let mut checks = Vec::new();
    let mut per_k = Vec::new();
    for (j, k) in ks_values.iter().enumerate() {
        let mine: Vec<&RunOutput> = runs.iter().zip(&jobs).filter(|(_, job)| job.0 == j).map(|(r, _)| r).collect();
        let pass = mine
            .iter()
            .all(|r| r.summary.is_ok() && r.summary.extra["passes"].as_bool() == Some(true));
        let worst = |key: &str| mine.iter().filter_map(|r| r.summary.extra[key].as_f64()).fold(0.0, f64::max);
        let critical = mine.first().and_then(|r| r.summary.extra["critical"].as_f64()).unwrap_or(f64::NAN);
        checks.push(Check::new(
            format!("k{k}_invariant"),
            pass,
            format!(
                "KS statistics r {:.4}, m {:.4} against critical value {critical:.4}",
                worst("ks_r"),
                worst("ks_m")
            ),
        ));
        per_k.push(json!({ "k": k, "ks_r": worst("ks_r"), "ks_m": worst("ks_m"), "critical": critical }));
    }
    let results = json!({
        "samples": n,
        "horizon": horizon,
        "level": KS_LEVEL,
        "families": per_k,
    });
    let mut c = collect(runs);
    c.tables.insert(0, table);
    Ok(Outcome {
        results,
        replicates: c.replicates,
        checks,
        tables: c.tables,
        timings: c.timings,
    })
}
