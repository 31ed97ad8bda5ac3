//! Poisson observations on a grid Gaussian Markov random field, sampled with
//! the local engines.

use bouncy::estimators::{MomentAccumulator, PathEstimate, DEFAULT_BATCHES};
use bouncy::models::GridPoissonGmrf;
use serde_json::json;

use super::{
    collect, initial_state, local_ess, local_events_table, local_mesh_table, par_map, pool, run_local, stream, timed,
    RunOutput, DATA_STREAM,
};
use crate::config::ExperimentConfig;
use crate::output::{num, Check, Estimate, Outcome, ReplicateSummary, Table};

pub(super) fn poisson_gmrf(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let side = config.model.side.expect("validated");
    let rho = config.model.rho.unwrap_or(GridPoissonGmrf::DEFAULT_RHO);
    let (model, latent) = GridPoissonGmrf::synthetic(side, rho, &mut stream(config.seed(), 0, DATA_STREAM))?;
    let graph = model.factor_graph();
    let d = model.dim();
    let scheme = config.scheme()?;
    let engines = config.engines();
    let jobs: Vec<(usize, usize)> = (0..engines.len())
        .flat_map(|e| (0..config.replicates()).map(move |i| (e, i)))
        .collect();

    let runs = par_map(&jobs, |&(e, i)| {
        let engine = engines[e];
        let label = engine.name();
        let first = i == 0;
        let dump_events = first && config.dump_events == Some(true);
        let (res, seconds) = timed(|| -> anyhow::Result<RunOutput> {
            let mut rng = stream(config.seed(), i, e as u64);
            let init = initial_state(d, &scheme, &mut rng);
            let traj = run_local(engine, &graph, &scheme, &init, config, dump_events, &mut rng)?;
            let mut tables = Vec::new();
            if dump_events {
                tables.push(local_events_table(&format!("events_{label}.csv"), &traj));
            }
            if let (Some(delta), true) = (config.mesh, first) {
                tables.push(local_mesh_table(&format!("mesh_{label}.csv"), &traj, delta)?);
            }
            let moments = MomentAccumulator::from_path(&traj, (0..d).collect(), DEFAULT_BATCHES);
            let mut summary = ReplicateSummary::ok(label, i, traj.stats.into());
            for (k, m) in moments.moments.iter().enumerate() {
                summary
                    .estimates
                    .push(Estimate::new(format!("mean[{k}]"), m.mean()).against(latent[k]));
                summary.estimates.push(Estimate::new(format!("variance[{k}]"), m.variance()));
            }
            summary.ess = local_ess(&traj, 0, config.ess_mesh());
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
            Err(err) => RunOutput {
                summary: ReplicateSummary::failed(label, i, err),
                tables: Vec::new(),
                seconds,
            },
        }
    });

    let mut table = Table::new(
        "cells.csv",
        ["engine", "replicate", "row", "col", "count", "latent", "mean", "std_error", "variance"],
    );
    let as_path = |e: &Estimate| PathEstimate {
        value: e.value,
        horizon: 0.0,
        std_error: e.std_error,
    };
    let mut per_engine = Vec::new();
    for (e, engine) in engines.iter().enumerate() {
        let mine: Vec<&RunOutput> = runs
            .iter()
            .zip(&jobs)
            .filter(|(r, j)| j.0 == e && r.summary.is_ok())
            .map(|(r, _)| r)
            .collect();
        for r in &mine {
            for (k, x) in latent.iter().enumerate() {
                let mean = r.summary.estimate(&format!("mean[{k}]")).expect("recorded");
                let var = r.summary.estimate(&format!("variance[{k}]")).expect("recorded");
                table.push(vec![
                    engine.name().to_string(),
                    r.summary.replicate.to_string(),
                    (k / side).to_string(),
                    (k % side).to_string(),
                    model.counts[k].to_string(),
                    num(*x),
                    num(mean.value),
                    num(mean.std_error),
                    num(var.value),
                ]);
            }
        }
        let pooled: Vec<(PathEstimate, PathEstimate)> = (0..d)
            .map(|k| {
                let pick = |name: String| {
                    let xs: Vec<PathEstimate> = mine.iter().filter_map(|r| r.summary.estimate(&name)).map(as_path).collect();
                    pool(&xs)
                };
                (pick(format!("mean[{k}]")), pick(format!("variance[{k}]")))
            })
            .collect();
        let covered = pooled
            .iter()
            .zip(&latent)
            .filter(|((m, v), x)| (m.value - **x).abs() <= 2.0 * v.value.max(0.0).sqrt())
            .count();
        per_engine.push((engine, pooled, covered, !mine.is_empty()));
    }

    let mut checks = Vec::new();
    for a in 0..per_engine.len() {
        for b in a + 1..per_engine.len() {
            let (ea, pa, _, oka) = &per_engine[a];
            let (eb, pb, _, okb) = &per_engine[b];
            let worst = pa
                .iter()
                .zip(pb)
                .map(|((x, _), (y, _))| (x.value - y.value).abs() / x.std_error.hypot(y.std_error))
                .fold(0.0, f64::max);
            checks.push(Check::new(
                format!("{}_vs_{}_means_within_4se", ea.name(), eb.name()),
                *oka && *okb && worst <= 4.0,
                format!("largest |difference| / combined se = {worst:.3} over {d} cells"),
            ));
        }
    }
    let results = json!({
        "side": side,
        "rho": rho,
        "horizon": config.horizon(),
        "counts": model.counts,
        "latent": latent,
        "engines": per_engine.iter().map(|(e, p, covered, _)| json!({
            "engine": e.name(),
            "posterior_mean": p.iter().map(|x| x.0.value).collect::<Vec<_>>(),
            "posterior_variance": p.iter().map(|x| x.1.value).collect::<Vec<_>>(),
            "latent_within_2sd": *covered as f64 / d as f64,
        })).collect::<Vec<_>>(),
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
