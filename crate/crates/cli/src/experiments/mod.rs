//! Experiment runners, one per [`ExperimentKind`].
//!
//! Replicates run in parallel. Each owns the random stream returned by
//! [`stream`], so results do not depend on scheduling and any replicate can
//! be rerun alone.

mod chain;
mod gaussian;
mod gmrf;
mod logistic;
mod theory;

pub use chain::{ORACLE_TOLERANCE, PAIRWISE_SE};
pub use gaussian::SWEEP_SLOPE_BAND;
pub use theory::{DEFAULT_RADIAL_SAMPLES, DEFAULT_WITNESS_EVENTS, KS_LEVEL, NORM_TOLERANCE};

use std::time::Instant;

use bouncy::bps::{EventKind, PhaseState, RefreshmentScheme, SegmentSink};
use bouncy::estimators::{discretize_coordinate, ess, PathEstimate};
use bouncy::factor_graph::{local_bps_queue, local_bps_thinning, FactorGraph, LocalOptions, LocalTrajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Engine, ExperimentConfig, ExperimentKind};
use crate::output::{num, Check, Outcome, ReplicateSummary, Table};

/// Runs a validated configuration.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let mut outcome = match config.kind {
        ExperimentKind::GaussianMoments => gaussian::moments(config)?,
        ExperimentKind::DimensionSweep => gaussian::dimension_sweep(config)?,
        ExperimentKind::GlobalVsLocal => chain::global_vs_local(config)?,
        ExperimentKind::RefreshComparison => chain::refresh_comparison(config)?,
        ExperimentKind::PoissonGmrf => gmrf::poisson_gmrf(config)?,
        ExperimentKind::LogisticBench => logistic::bench(config)?,
        ExperimentKind::Reducibility => theory::reducibility(config)?,
        ExperimentKind::RadialInvariance => theory::radial_invariance(config)?,
    };
    let failed: Vec<String> = outcome
        .replicates
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{}#{}", r.label, r.replicate))
        .collect();
    let unbalanced = outcome.replicates.iter().filter(|r| !r.tallies.is_conserved()).count();
    outcome.checks.insert(
        0,
        Check::new(
            "tally_conservation",
            unbalanced == 0,
            format!("{unbalanced} runs with events != bounces + refreshes + rejections"),
        ),
    );
    outcome.checks.insert(
        0,
        Check::new(
            "replicates_completed",
            failed.is_empty(),
            if failed.is_empty() {
                "all runs finished".to_string()
            } else {
                format!("aborted: {}", failed.join(" "))
            },
        ),
    );
    Ok(outcome)
}

/// Random stream of engine `engine` in replicate `replicate`: the root seed
/// fixes the ChaCha key and the pair selects a disjoint stream.
pub fn stream(seed: u64, replicate: usize, engine: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 32) | engine);
    rng
}

/// Stream reserved for synthetic data shared by all replicates.
pub(crate) const DATA_STREAM: u64 = 0xDA7A;

pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Zero position, velocity drawn from the scheme's stationary law.
pub(crate) fn initial_state(dim: usize, scheme: &RefreshmentScheme, rng: &mut ChaCha8Rng) -> PhaseState {
    let v = scheme.initial_velocity(dim, rng);
    PhaseState::new(vec![0.0; dim], v).expect("finite initial state")
}

/// `count` coordinates spread evenly over `0..dim`, endpoints included.
pub(crate) fn probe_coordinates(dim: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, dim);
    if count == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|j| ((j * (dim - 1)) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

pub(crate) fn run_local(
    engine: Engine,
    graph: &FactorGraph,
    scheme: &RefreshmentScheme,
    initial: &PhaseState,
    config: &ExperimentConfig,
    record_events: bool,
    rng: &mut ChaCha8Rng,
) -> bouncy::Result<LocalTrajectory> {
    let options = LocalOptions {
        limits: config.limits(),
        record_events,
        ..Default::default()
    };
    let horizon = config.horizon();
    match engine {
        Engine::Queue => local_bps_queue(graph, scheme, initial, horizon, options, rng),
        Engine::Thinning => {
            local_bps_thinning(graph, scheme, initial, horizon, config.thinning_options(), options, rng)
        }
        Engine::Global => unreachable!("global runs do not use a factor graph"),
    }
}

/// Batch-means ESS of one coordinate of a local run on the ESS mesh.
pub(crate) fn local_ess(traj: &LocalTrajectory, k: usize, mesh: f64) -> Option<f64> {
    let xs = discretize_coordinate(traj, k, mesh).ok()?;
    ess(&xs).ok().map(|e| e.ess)
}

/// Mean of replicate estimates with the standard error of that mean.
pub(crate) fn pool(estimates: &[PathEstimate]) -> PathEstimate {
    let n = estimates.len().max(1) as f64;
    PathEstimate {
        value: estimates.iter().map(|e| e.value).sum::<f64>() / n,
        horizon: estimates.iter().map(|e| e.horizon).sum(),
        std_error: estimates.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt() / n,
    }
}

pub(crate) fn relative_error(estimate: f64, reference: f64) -> f64 {
    (estimate - reference).abs() / reference.abs()
}

fn joined<T: Copy>(xs: impl Iterator<Item = T>, f: impl Fn(T) -> String) -> String {
    xs.map(f).collect::<Vec<_>>().join(";")
}

const EVENT_HEADER: [&str; 6] = ["time", "event", "factor", "coordinates", "positions", "velocities"];

/// Event dump of a global run: one row per segment start plus the horizon.
pub(crate) struct EventRecorder {
    table: Table,
    previous: &'static str,
    last: Option<(f64, Vec<f64>)>,
}

impl EventRecorder {
    pub(crate) fn new(file: &str) -> Self {
        Self {
            table: Table::new(file, EVENT_HEADER),
            previous: "initial",
            last: None,
        }
    }

    pub(crate) fn finish(mut self) -> Table {
        if let Some((t, x)) = self.last.take() {
            let coords = joined(0..x.len(), |k| k.to_string());
            self.table.push(vec![
                num(t),
                EventKind::Horizon.as_str().into(),
                String::new(),
                coords,
                joined(x.iter().copied(), num),
                String::new(),
            ]);
        }
        self.table
    }
}

impl SegmentSink for EventRecorder {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        self.table.push(vec![
            num(start_time),
            self.previous.into(),
            String::new(),
            joined(0..x.len(), |k| k.to_string()),
            joined(x.iter().copied(), num),
            joined(v.iter().copied(), num),
        ]);
        self.previous = end.as_str();
        if end == EventKind::Horizon {
            let y = x.iter().zip(v).map(|(a, b)| a + b * duration).collect();
            self.last = Some((start_time + duration, y));
        }
    }
}

/// Event dump of a local run from its event log.
pub(crate) fn local_events_table(file: &str, traj: &LocalTrajectory) -> Table {
    let mut table = Table::new(file, EVENT_HEADER);
    for e in &traj.events {
        table.push(vec![
            num(e.time),
            e.kind.as_str().into(),
            e.factor.map_or(String::new(), |f| f.to_string()),
            joined(e.coordinates.iter(), |c| c.0.to_string()),
            joined(e.coordinates.iter(), |c| num(c.1)),
            joined(e.coordinates.iter(), |c| num(c.2)),
        ]);
    }
    table
}

/// Dense mesh dump: `t` followed by one column per coordinate.
pub(crate) fn mesh_table(file: &str, dim: usize, delta: f64, rows: &[Vec<f64>]) -> Table {
    let header = std::iter::once("t".to_string()).chain((0..dim).map(|k| format!("x{k}")));
    let mut table = Table::new(file, header);
    for (l, row) in rows.iter().enumerate() {
        let mut out = vec![num(l as f64 * delta)];
        out.extend(row.iter().copied().map(num));
        table.push(out);
    }
    table
}

pub(crate) fn local_mesh_table(file: &str, traj: &LocalTrajectory, delta: f64) -> bouncy::Result<Table> {
    let rows = bouncy::estimators::discretize(traj, delta)?;
    Ok(mesh_table(file, traj.dim(), delta, &rows))
}

/// Unpacks per-run results into the outcome, collecting optional tables.
pub(crate) struct Collected {
    pub replicates: Vec<ReplicateSummary>,
    pub tables: Vec<Table>,
    pub timings: Vec<(String, f64)>,
}

pub(crate) struct RunOutput {
    pub summary: ReplicateSummary,
    pub tables: Vec<Table>,
    pub seconds: f64,
}

pub(crate) fn collect(runs: Vec<RunOutput>) -> Collected {
    let mut c = Collected {
        replicates: Vec::with_capacity(runs.len()),
        tables: Vec::new(),
        timings: Vec::with_capacity(runs.len()),
    };
    for r in runs {
        c.timings
            .push((format!("{}#{}", r.summary.label, r.summary.replicate), r.seconds));
        c.replicates.push(r.summary);
        c.tables.extend(r.tables);
    }
    c
}
