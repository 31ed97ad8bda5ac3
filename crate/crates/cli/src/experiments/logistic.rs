//! Logistic regression with the alias-table local sampler: cost per event as
//! the number of data grows.

use bouncy::models::{logistic_local_bps, AliasTables, LogisticBpsOptions, LogisticData};
use serde_json::json;

use super::{collect, initial_state, local_ess, local_events_table, local_mesh_table, par_map, stream, timed, RunOutput, DATA_STREAM};
use crate::config::ExperimentConfig;
use crate::output::{num, Check, Outcome, ReplicateSummary, Table};

struct Dataset {
    data: LogisticData,
    tables: AliasTables,
}

fn datasets(config: &ExperimentConfig) -> anyhow::Result<Vec<Dataset>> {
    let prior_variance = config.model.prior_variance.unwrap_or(1.0);
    let data = match &config.model.data_path {
        Some(path) => vec![LogisticData::load(path, prior_variance)?],
        None => {
            let covariates = config.model.covariates.unwrap_or(2);
            let sizes = config.model.data_sizes.as_deref().expect("validated");
            sizes
                .iter()
                .enumerate()
                .map(|(j, &n)| {
                    let mut rng = stream(config.seed(), 0, DATA_STREAM + 1 + j as u64);
                    LogisticData::synthetic(n, covariates, prior_variance, &mut rng).map(|(d, _)| d)
                })
                .collect::<bouncy::Result<_>>()?
        }
    };
    Ok(data
        .into_iter()
        .map(|data| Dataset {
            tables: AliasTables::new(&data),
            data,
        })
        .collect())
}

pub(super) fn bench(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sets = datasets(config)?;
    let scheme = config.scheme()?;
    let horizon = config.horizon();
    let options = LogisticBpsOptions {
        refresh_rate: config.refresh_rate(),
        delta: config.sampler.delta.expect("validated"),
        limits: config.limits(),
        record_events: false,
    };
    let jobs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|j| (0..config.replicates()).map(move |i| (j, i)))
        .collect();

    let runs = par_map(&jobs, |&(j, i)| {
        let set = &sets[j];
        let n = set.data.len();
        let label = format!("R{n}");
        let first = i == 0;
        let dump_events = first && config.dump_events == Some(true);
        let (res, seconds) = timed(|| -> anyhow::Result<RunOutput> {
            let mut rng = stream(config.seed(), i, j as u64);
            let init = initial_state(set.data.dim(), &scheme, &mut rng);
            let opts = LogisticBpsOptions {
                record_events: dump_events,
                ..options
            };
            let run = logistic_local_bps(&set.data, &set.tables, &init, horizon, opts, &mut rng)?;
            let traj = &run.trajectory;
            let mut tables = Vec::new();
            if dump_events {
                tables.push(local_events_table(&format!("events_{label}.csv"), traj));
            }
            if let (Some(delta), true) = (config.mesh, first) {
                tables.push(local_mesh_table(&format!("mesh_{label}.csv"), traj, delta)?);
            }
            let mut summary = ReplicateSummary::ok(&label, i, traj.stats.into());
            summary.ess = local_ess(traj, 0, config.ess_mesh());
            let c = run.counters;
            summary.extra = json!({
                "data_size": n,
                "data_candidates": c.data_candidates,
                "datum_gradient_evaluations": c.datum_gradient_evaluations,
                "prior_candidates": c.prior_candidates,
                "max_bound_ratio": c.max_ratio_ppm as f64 * 1e-6,
            });
            Ok(RunOutput {
                summary,
                tables,
                seconds: 0.0,
            })
        });
        match res {
            Ok(mut out) => {
                out.seconds = seconds;
                out
            }
            Err(e) => RunOutput {
                summary: ReplicateSummary::failed(label, i, e),
                tables: Vec::new(),
                seconds,
            },
        }
    });

    let mut table = Table::new(
        "logistic.csv",
        [
            "data_size",
            "replicate",
            "ess",
            "events",
            "data_candidates",
            "datum_gradients",
            "ess_per_datum_gradient",
            "max_bound_ratio",
        ],
    );
    let mut one_per_candidate = true;
    let mut worst_ratio: f64 = 0.0;
    let mut all_ok = true;
    let mut per_size = vec![(0.0, 0usize); sets.len()];
    for (run, &(j, _)) in runs.iter().zip(&jobs) {
        let s = &run.summary;
        if !s.is_ok() {
            all_ok = false;
            continue;
        }
        let x = &s.extra;
        let candidates = x["data_candidates"].as_u64().unwrap_or(0);
        let gradients = x["datum_gradient_evaluations"].as_u64().unwrap_or(0);
        let ratio = x["max_bound_ratio"].as_f64().unwrap_or(f64::NAN);
        let ess = s.ess.unwrap_or(f64::NAN);
        let per_gradient = ess / gradients.max(1) as f64;
        one_per_candidate &= candidates == gradients;
        worst_ratio = worst_ratio.max(ratio);
        per_size[j].0 += per_gradient;
        per_size[j].1 += 1;
        table.push(vec![
            sets[j].data.len().to_string(),
            s.replicate.to_string(),
            num(ess),
            s.tallies.events.to_string(),
            candidates.to_string(),
            gradients.to_string(),
            num(per_gradient),
            num(ratio),
        ]);
    }
    let checks = vec![
        Check::new(
            "one_gradient_per_data_candidate",
            all_ok && one_per_candidate,
            "datum gradient evaluations equal data candidates in every run",
        ),
        Check::new(
            "bounds_never_violated",
            all_ok && worst_ratio <= 1.0,
            format!("largest intensity / bound ratio {worst_ratio:.6}"),
        ),
    ];
    let results = json!({
        "data_sizes": sets.iter().map(|s| s.data.len()).collect::<Vec<_>>(),
        "covariates": sets.first().map(|s| s.data.dim()),
        "horizon": horizon,
        "refresh_rate": options.refresh_rate,
        "delta": options.delta,
        "mean_ess_per_datum_gradient": per_size.iter().map(|(t, n)| t / (*n).max(1) as f64).collect::<Vec<_>>(),
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
