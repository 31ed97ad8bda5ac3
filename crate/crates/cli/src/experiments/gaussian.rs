//! Isotropic Gaussian targets: stationarity of the global sampler and the
//! dimension sweep.

use bouncy::bps::{simulate_into, ConvexLineSearch, EnergyModel, RefreshmentScheme, Thinned};
use bouncy::estimators::{ess, MeshSink, MomentAccumulator, PathEstimate, DEFAULT_BATCHES};
use bouncy::models::IsotropicGaussian;
use bouncy::ppsim::IntensityEnvelope;
use bouncy::stats::ols_slope;
use serde_json::json;

use super::{collect, initial_state, mesh_table, par_map, pool, stream, timed, EventRecorder, RunOutput};
use crate::config::{ExperimentConfig, Strategy};
use crate::output::{num, Check, Estimate, Outcome, ReplicateSummary, Table};

type Model = Box<dyn EnergyModel + Send + Sync>;

/// `U(x) = scale |x|^2` with the requested bounce-time strategy.
fn gaussian_model(dim: usize, scale: f64, strategy: Strategy, delta: f64) -> anyhow::Result<Model> {
    let base = IsotropicGaussian::new(dim, scale)?;
    Ok(match strategy {
        Strategy::Inversion => Box::new(base),
        Strategy::Convex => Box::new(ConvexLineSearch::new(base)),
        Strategy::Thinning => Box::new(Thinned {
            model: base,
            // the ray intensity 2 scale <x + v t, v> grows with t
            envelope: move |x: &[f64], v: &[f64], s: f64| {
                let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
                let vv: f64 = v.iter().map(|b| b * b).sum();
                IntensityEnvelope::new((2.0 * scale * (xv + (s + delta) * vv)).max(0.0), delta)
            },
        }),
    })
}

struct GlobalRun {
    summary: ReplicateSummary,
    moments: MomentAccumulator,
    mesh: MeshSink,
    tables: Vec<Table>,
}

/// One global run recording moments of every coordinate and the ESS mesh.
fn global_run(
    config: &ExperimentConfig,
    label: &str,
    model: &Model,
    scheme: &RefreshmentScheme,
    replicate: usize,
    engine: u64,
) -> anyhow::Result<GlobalRun> {
    let d = model.dim();
    let horizon = config.horizon();
    let mut rng = stream(config.seed(), replicate, engine);
    let init = initial_state(d, scheme, &mut rng);
    let mut moments = MomentAccumulator::new((0..d).collect(), horizon, DEFAULT_BATCHES);
    let mut mesh = MeshSink::new((0..d).collect(), config.ess_mesh(), horizon)?;
    let first = replicate == 0;
    let mut dump = match config.mesh {
        Some(delta) if first => Some(MeshSink::new((0..d).collect(), delta, horizon)?),
        _ => None,
    };
    let mut events = (first && config.dump_events == Some(true)).then(|| EventRecorder::new(&format!("events_{label}.csv")));
    let sinks = ((&mut moments, &mut mesh), (&mut dump, &mut events));
    let stats = simulate_into(&**model, scheme, &init, horizon, config.limits(), &mut rng, sinks)?;
    let mut tables = Vec::new();
    if let Some(m) = dump {
        tables.push(mesh_table(&format!("mesh_{label}.csv"), d, m.delta, &m.rows));
    }
    if let Some(e) = events {
        tables.push(e.finish());
    }
    Ok(GlobalRun {
        summary: ReplicateSummary::ok(label, replicate, stats.into()),
        moments,
        mesh,
        tables,
    })
}

pub(super) fn moments(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let d = config.model.dim.expect("validated");
    let scale = config.model.scale.unwrap_or(1.0);
    let strategy = config.sampler.strategy.unwrap_or(Strategy::Inversion);
    let delta = config.sampler.delta.unwrap_or(0.5);
    let truth = IsotropicGaussian::new(d, scale)?.variance();
    let scheme = config.scheme()?;
    let reps: Vec<usize> = (0..config.replicates()).collect();

    let runs = par_map(&reps, |&i| {
        let (res, seconds) = timed(|| {
            let model = gaussian_model(d, scale, strategy, delta)?;
            global_run(config, "global", &model, &scheme, i, 0)
        });
        res.map(|run| (run, seconds))
    });

    let mut outputs = Vec::new();
    let mut means = vec![Vec::new(); d];
    let mut seconds_moments = vec![Vec::new(); d];
    for (i, run) in runs.into_iter().enumerate() {
        let (mut run, seconds) = match run {
            Ok(r) => r,
            Err(e) => {
                outputs.push(RunOutput {
                    summary: ReplicateSummary::failed("global", i, e),
                    tables: Vec::new(),
                    seconds: 0.0,
                });
                continue;
            }
        };
        let mut per_coord_ess = Vec::with_capacity(d);
        for (k, m) in run.moments.moments.iter().enumerate() {
            let (mean, second) = (m.mean(), m.second_moment());
            run.summary.estimates.push(Estimate::new(format!("mean[{k}]"), mean).against(0.0));
            run.summary
                .estimates
                .push(Estimate::new(format!("second_moment[{k}]"), second).against(truth));
            means[k].push(mean);
            seconds_moments[k].push(second);
            per_coord_ess.push(ess(&run.mesh.column(k)).map_or(f64::NAN, |e| e.ess));
        }
        run.summary.ess = per_coord_ess.first().copied();
        run.summary.extra = json!({ "ess_per_coordinate": per_coord_ess });
        outputs.push(RunOutput {
            summary: run.summary,
            tables: run.tables,
            seconds,
        });
    }

    let pooled: Vec<(PathEstimate, PathEstimate)> =
        (0..d).map(|k| (pool(&means[k]), pool(&seconds_moments[k]))).collect();
    let z = |e: &PathEstimate, t: f64| (e.value - t).abs() / e.std_error;
    let worst_mean = pooled.iter().map(|(m, _)| z(m, 0.0)).fold(0.0, f64::max);
    let worst_second = pooled.iter().map(|(_, s)| z(s, truth)).fold(0.0, f64::max);
    let ok = !means[0].is_empty();
    let checks = vec![
        Check::new(
            "mean_within_3se",
            ok && worst_mean <= 3.0,
            format!("largest |mean| / se = {worst_mean:.3}"),
        ),
        Check::new(
            "second_moment_within_3se",
            ok && worst_second <= 3.0,
            format!("largest |second moment - {truth}| / se = {worst_second:.3}"),
        ),
    ];
    let results = json!({
        "dim": d,
        "scale": scale,
        "strategy": format!("{strategy:?}").to_lowercase(),
        "scheme": scheme.kind.name(),
        "refresh_rate": scheme.rate,
        "horizon": config.horizon(),
        "target_second_moment": truth,
        "pooled": pooled.iter().enumerate().map(|(k, (m, s))| json!({
            "coordinate": k,
            "mean": m.value,
            "mean_se": m.std_error,
            "second_moment": s.value,
            "second_moment_se": s.std_error,
        })).collect::<Vec<_>>(),
    });
    let c = collect(outputs);
    Ok(Outcome {
        results,
        replicates: c.replicates,
        checks,
        tables: c.tables,
        timings: c.timings,
    })
}

/// Accepted band for the log-log slope of ESS per event against dimension.
pub const SWEEP_SLOPE_BAND: (f64, f64) = (-2.0, -1.0);

/// ESS of x1 per event, per event and dimension, and of |x|^2 per event.
type PerDim = (Vec<f64>, Vec<f64>, Vec<f64>);

pub(super) fn dimension_sweep(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let dims = config.model.dims.clone().expect("validated");
    let scale = config.model.scale.unwrap_or(1.0);
    let strategy = config.sampler.strategy.unwrap_or(Strategy::Inversion);
    let delta = config.sampler.delta.unwrap_or(0.5);
    let scheme = config.scheme()?;
    let horizon = config.horizon();
    let jobs: Vec<(usize, usize)> = (0..dims.len())
        .flat_map(|j| (0..config.replicates()).map(move |i| (j, i)))
        .collect();

    let runs = par_map(&jobs, |&(j, i)| {
        let d = dims[j];
        let label = format!("d{d}");
        let (res, seconds) = timed(|| -> anyhow::Result<RunOutput> {
            let model = gaussian_model(d, scale, strategy, delta)?;
            let mut run = global_run(config, &label, &model, &scheme, i, j as u64)?;
            let x1 = ess(&run.mesh.column(0))?.ess;
            let norm2: Vec<f64> = run.mesh.rows.iter().map(|r| r.iter().map(|a| a * a).sum()).collect();
            let n2 = ess(&norm2)?.ess;
            let events = run.summary.tallies.events.max(1) as f64;
            run.summary.ess = Some(x1);
            run.summary.extra = json!({
                "dim": d,
                "ess_per_event": x1 / events,
                "ess_per_event_dim": x1 / (events * d as f64),
                "ess_per_time": x1 / horizon,
                "ess_norm2": n2,
            });
            Ok(RunOutput {
                summary: run.summary,
                tables: run.tables,
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
        "sweep.csv",
        [
            "dim",
            "replicate",
            "ess",
            "events",
            "ess_per_event",
            "ess_per_event_dim",
            "ess_per_time",
            "ess_norm2",
            "ess_norm2_per_event",
        ],
    );
    let mut per_dim: Vec<PerDim> = vec![Default::default(); dims.len()];
    for (run, &(j, _)) in runs.iter().zip(&jobs) {
        let s = &run.summary;
        if !s.is_ok() {
            continue;
        }
        let x = &s.extra;
        let get = |k: &str| x[k].as_f64().unwrap_or(f64::NAN);
        let events = s.tallies.events as f64;
        table.push(vec![
            dims[j].to_string(),
            s.replicate.to_string(),
            num(s.ess.unwrap_or(f64::NAN)),
            s.tallies.events.to_string(),
            num(get("ess_per_event")),
            num(get("ess_per_event_dim")),
            num(get("ess_per_time")),
            num(get("ess_norm2")),
            num(get("ess_norm2") / events),
        ]);
        per_dim[j].0.push(get("ess_per_event"));
        per_dim[j].1.push(get("ess_per_event_dim"));
        per_dim[j].2.push(get("ess_norm2") / events);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let log_d: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    let slope_of = |pick: fn(&PerDim) -> &Vec<f64>| {
        let ys: Vec<f64> = per_dim.iter().map(|p| mean(pick(p)).ln()).collect();
        (ols_slope(&log_d, &ys), ys.iter().map(|y| y.exp()).collect::<Vec<_>>())
    };
    let (slope, per_event) = slope_of(|p| &p.0);
    let (cost_slope, per_cost) = slope_of(|p| &p.1);
    let (norm2_slope, norm2_per_event) = slope_of(|p| &p.2);
    let (lo, hi) = SWEEP_SLOPE_BAND;
    let checks = vec![Check::new(
        "ess_per_event_slope_in_band",
        slope >= lo && slope <= hi,
        format!("slope {slope:.4} vs [{lo}, {hi}]; per event per dimension {cost_slope:.4}"),
    )];
    let results = json!({
        "dims": dims,
        "horizon": horizon,
        "scale": scale,
        "refresh_rate": scheme.rate,
        "mean_ess_per_event": per_event,
        "mean_ess_per_event_dim": per_cost,
        "mean_ess_norm2_per_event": norm2_per_event,
        "slope_ess_per_event": slope,
        "slope_ess_per_event_dim": cost_slope,
        "slope_ess_norm2_per_event": norm2_slope,
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
