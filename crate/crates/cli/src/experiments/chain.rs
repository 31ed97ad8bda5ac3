//! Chain Gaussian Markov random field: global against local samplers and the
//! refreshment-scheme comparison, both checked against the dense oracle.

use bouncy::bps::{simulate_into, RefreshmentScheme};
use bouncy::estimators::{ess, MeshSink, MomentAccumulator, PathEstimate, DEFAULT_BATCHES};
use bouncy::models::ChainGmrf;
use serde_json::json;

use super::{
    collect, initial_state, local_ess, local_events_table, local_mesh_table, mesh_table, par_map, pool,
    probe_coordinates, relative_error, run_local, stream, timed, EventRecorder, RunOutput,
};
use crate::config::{Engine, ExperimentConfig, SchemeName};
use crate::output::{num, Check, Estimate, Outcome, ReplicateSummary, Table};

/// Relative error allowed against the oracle variances.
pub const ORACLE_TOLERANCE: f64 = 0.05;

/// Combined standard errors allowed between two samplers.
pub const PAIRWISE_SE: f64 = 3.0;

struct ChainSetup {
    chain: ChainGmrf,
    probes: Vec<usize>,
    oracle: Vec<f64>,
}

impl ChainSetup {
    fn new(config: &ExperimentConfig) -> anyhow::Result<Self> {
        let d = config.model.dim.expect("validated");
        let chain = ChainGmrf::new(d, config.model.rho.unwrap_or(0.5))?;
        let probes = probe_coordinates(d, config.run.probes.unwrap_or(10));
        let all = chain.marginal_variances();
        let oracle = probes.iter().map(|&k| all[k]).collect();
        Ok(Self { chain, probes, oracle })
    }
}

/// Variance estimates at the probes for one run of one engine.
fn chain_run(
    config: &ExperimentConfig,
    setup: &ChainSetup,
    engine: Engine,
    scheme: &RefreshmentScheme,
    label: &str,
    replicate: usize,
    stream_id: u64,
) -> RunOutput {
    let d = setup.chain.dim;
    let first = replicate == 0;
    let dump_events = first && config.dump_events == Some(true);
    let horizon = config.horizon();
    let (res, seconds) = timed(|| -> anyhow::Result<(ReplicateSummary, MomentAccumulator, Vec<Table>)> {
        let mut rng = stream(config.seed(), replicate, stream_id);
        let init = initial_state(d, scheme, &mut rng);
        let mut tables = Vec::new();
        if engine == Engine::Global {
            let model = setup.chain.global_model();
            let mut moments = MomentAccumulator::new(setup.probes.clone(), horizon, DEFAULT_BATCHES);
            let mut mesh = MeshSink::new(vec![setup.probes[0]], config.ess_mesh(), horizon)?;
            let mut dump = match config.mesh {
                Some(delta) if first => Some(MeshSink::new((0..d).collect(), delta, horizon)?),
                _ => None,
            };
            let mut events = dump_events.then(|| EventRecorder::new(&format!("events_{label}.csv")));
            let sinks = ((&mut moments, &mut mesh), (&mut dump, &mut events));
            let stats = simulate_into(&model, scheme, &init, horizon, config.limits(), &mut rng, sinks)?;
            if let Some(m) = dump {
                tables.push(mesh_table(&format!("mesh_{label}.csv"), d, m.delta, &m.rows));
            }
            if let Some(e) = events {
                tables.push(e.finish());
            }
            let mut summary = ReplicateSummary::ok(label, replicate, stats.into());
            summary.ess = ess(&mesh.column(0)).ok().map(|e| e.ess);
            return Ok((summary, moments, tables));
        }
        let graph = setup.chain.factor_graph();
        let traj = run_local(engine, &graph, scheme, &init, config, dump_events, &mut rng)?;
        if dump_events {
            tables.push(local_events_table(&format!("events_{label}.csv"), &traj));
        }
        if let (Some(delta), true) = (config.mesh, first) {
            tables.push(local_mesh_table(&format!("mesh_{label}.csv"), &traj, delta)?);
        }
        let mut summary = ReplicateSummary::ok(label, replicate, traj.stats.into());
        summary.ess = local_ess(&traj, setup.probes[0], config.ess_mesh());
        let moments = MomentAccumulator::from_path(&traj, setup.probes.clone(), DEFAULT_BATCHES);
        Ok((summary, moments, tables))
    });
    match res {
        Ok((mut summary, moments, tables)) => {
            for ((m, &k), &truth) in moments.moments.iter().zip(&setup.probes).zip(&setup.oracle) {
                summary
                    .estimates
                    .push(Estimate::new(format!("variance[{k}]"), m.variance()).against(truth));
            }
            RunOutput {
                summary,
                tables,
                seconds,
            }
        }
        Err(e) => RunOutput {
            summary: ReplicateSummary::failed(label, replicate, e),
            tables: Vec::new(),
            seconds,
        },
    }
}

/// Variance estimates of the successful runs in `runs`, one vector per probe.
fn variances(setup: &ChainSetup, runs: &[&RunOutput]) -> Vec<Vec<PathEstimate>> {
    setup
        .probes
        .iter()
        .map(|&k| {
            let name = format!("variance[{k}]");
            runs.iter()
                .filter(|r| r.summary.is_ok())
                .filter_map(|r| r.summary.estimate(&name))
                .map(|e| PathEstimate {
                    value: e.value,
                    horizon: 0.0,
                    std_error: e.std_error,
                })
                .collect()
        })
        .collect()
}

fn variance_rows(table: &mut Table, prefix: &[String], setup: &ChainSetup, run: &RunOutput) {
    for (&k, &truth) in setup.probes.iter().zip(&setup.oracle) {
        if let Some(e) = run.summary.estimate(&format!("variance[{k}]")) {
            let mut row = prefix.to_vec();
            row.extend([
                run.summary.replicate.to_string(),
                k.to_string(),
                num(e.value),
                num(e.std_error),
                num(truth),
                num((e.value - truth) / truth),
            ]);
            table.push(row);
        }
    }
}

pub(super) fn global_vs_local(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let setup = ChainSetup::new(config)?;
    let scheme = config.scheme()?;
    let engines = config.engines();
    let jobs: Vec<(usize, usize)> = (0..engines.len())
        .flat_map(|e| (0..config.replicates()).map(move |i| (e, i)))
        .collect();
    let runs = par_map(&jobs, |&(e, i)| {
        chain_run(config, &setup, engines[e], &scheme, engines[e].name(), i, e as u64)
    });

    let mut table = Table::new(
        "variances.csv",
        ["engine", "replicate", "coordinate", "estimate", "std_error", "oracle", "relative_error"],
    );
    let mut pooled: Vec<Vec<PathEstimate>> = Vec::new();
    let mut checks = Vec::new();
    for (e, engine) in engines.iter().enumerate() {
        let mine: Vec<&RunOutput> = runs.iter().zip(&jobs).filter(|(_, j)| j.0 == e).map(|(r, _)| r).collect();
        for r in &mine {
            variance_rows(&mut table, &[engine.name().to_string()], &setup, r);
        }
        let est: Vec<PathEstimate> = variances(&setup, &mine).iter().map(|v| pool(v)).collect();
        let complete = !mine.is_empty() && mine.iter().all(|m| m.summary.is_ok());
        let worst = est
            .iter()
            .zip(&setup.oracle)
            .map(|(p, t)| relative_error(p.value, *t))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("{}_within_5pct_of_oracle", engine.name()),
            complete && worst <= ORACLE_TOLERANCE,
            format!("largest relative error {worst:.4}"),
        ));
        pooled.push(est);
    }
    for a in 0..engines.len() {
        for b in a + 1..engines.len() {
            let worst = pooled[a]
                .iter()
                .zip(&pooled[b])
                .map(|(x, y)| (x.value - y.value).abs() / x.std_error.hypot(y.std_error))
                .fold(0.0, f64::max);
            checks.push(Check::new(
                format!("{}_vs_{}_within_3se", engines[a].name(), engines[b].name()),
                worst <= PAIRWISE_SE,
                format!("largest |difference| / combined se = {worst:.3}"),
            ));
        }
    }
    let results = json!({
        "dim": setup.chain.dim,
        "rho": setup.chain.rho,
        "horizon": config.horizon(),
        "scheme": scheme.kind.name(),
        "refresh_rate": scheme.rate,
        "probes": setup.probes,
        "oracle": setup.oracle,
        "engines": engines.iter().zip(&pooled).map(|(e, p)| json!({
            "engine": e.name(),
            "variance": p.iter().map(|x| x.value).collect::<Vec<_>>(),
            "std_error": p.iter().map(|x| x.std_error).collect::<Vec<_>>(),
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

const ALL_SCHEMES: [SchemeName; 4] = [
    SchemeName::GlobalGaussian,
    SchemeName::RestrictedSphere,
    SchemeName::RestrictedPartial,
    SchemeName::Local,
];

pub(super) fn refresh_comparison(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let setup = ChainSetup::new(config)?;
    let schemes = config.sampler.schemes.clone().unwrap_or_else(|| ALL_SCHEMES.to_vec());
    let rates = config
        .sampler
        .refresh_rates
        .clone()
        .unwrap_or_else(|| vec![config.refresh_rate()]);
    let engine = config.engines()[0];
    let jobs: Vec<(usize, usize, usize)> = (0..schemes.len())
        .flat_map(|s| (0..rates.len()).flat_map(move |r| (0..config.replicates()).map(move |i| (s, r, i))))
        .collect();
    let built: Vec<Vec<RefreshmentScheme>> = schemes
        .iter()
        .map(|&s| rates.iter().map(|&r| config.scheme_named(s, r)).collect())
        .collect::<anyhow::Result<_>>()?;
    let runs = par_map(&jobs, |&(s, r, i)| {
        let label = format!("{}@{}", schemes[s].name(), rates[r]);
        chain_run(config, &setup, engine, &built[s][r], &label, i, ((s as u64) << 16) | r as u64)
    });

    let mut table = Table::new(
        "boxplot.csv",
        [
            "scheme",
            "refresh_rate",
            "replicate",
            "coordinate",
            "estimate",
            "std_error",
            "oracle",
            "relative_error",
        ],
    );
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for (s, scheme) in schemes.iter().enumerate() {
        for (r, rate) in rates.iter().enumerate() {
            let mine: Vec<&RunOutput> = runs
                .iter()
                .zip(&jobs)
                .filter(|(_, j)| j.0 == s && j.1 == r)
                .map(|(x, _)| x)
                .collect();
            for run in &mine {
                variance_rows(&mut table, &[scheme.name().to_string(), num(*rate)], &setup, run);
            }
            let est: Vec<PathEstimate> = variances(&setup, &mine).iter().map(|v| pool(v)).collect();
            let errors: Vec<f64> = est.iter().zip(&setup.oracle).map(|(p, t)| relative_error(p.value, *t)).collect();
            let worst = errors.iter().copied().fold(0.0, f64::max);
            let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
            let complete = mine.iter().all(|m| m.summary.is_ok());
            if *rate == config.refresh_rate() {
                checks.push(Check::new(
                    format!("{}_within_5pct_of_oracle", scheme.name()),
                    complete && worst <= ORACLE_TOLERANCE,
                    format!("largest relative error {worst:.4} at refresh rate {rate}"),
                ));
            }
            cells.push(json!({
                "scheme": scheme.name(),
                "refresh_rate": rate,
                "max_relative_error": worst,
                "mean_relative_error": mean,
                "variance": est.iter().map(|x| x.value).collect::<Vec<_>>(),
            }));
        }
    }
    let results = json!({
        "dim": setup.chain.dim,
        "rho": setup.chain.rho,
        "engine": engine.name(),
        "horizon": config.horizon(),
        "probes": setup.probes,
        "oracle": setup.oracle,
        "cells": cells,
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
