//! Estimators over piecewise-linear trajectories, effective sample sizes and
//! the isotropic-Gaussian theory checks.

mod radial;
mod reducibility;

use crate::bps::{EventKind, SegmentSink, Trajectory};
use crate::error::{Error, Result};
use crate::factor_graph::LocalTrajectory;
use crate::stats::mean_variance;

pub use radial::{
    invariant_family_density, radial_flow, radial_simulate, radial_simulate_scaled, sample_invariant_family,
    RadialState, RadialTrajectory,
};
pub use reducibility::{reducibility_witness, segment_min_norm, ReducibilityReport};

/// Equal-time batches used for standard errors unless stated otherwise.
pub const DEFAULT_BATCHES: usize = 50;

/// A time average with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub value: f64,
    pub horizon: f64,
    pub std_error: f64,
}

/// Something that can be read coordinate by coordinate as linear pieces.
pub trait CoordinatePath {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    /// Calls `f(start_time, position, velocity, duration)` for each linear
    /// piece of coordinate `k`, in time order.
    fn for_each_piece(&self, k: usize, f: &mut dyn FnMut(f64, f64, f64, f64));
}

impl CoordinatePath for Trajectory {
    fn dim(&self) -> usize {
        Trajectory::dim(self)
    }
    fn horizon(&self) -> f64 {
        Trajectory::horizon(self)
    }
    fn for_each_piece(&self, k: usize, f: &mut dyn FnMut(f64, f64, f64, f64)) {
        for s in &self.segments {
            f(s.start_time, s.start.position[k], s.start.velocity[k], s.duration);
        }
    }
}

impl CoordinatePath for LocalTrajectory {
    fn dim(&self) -> usize {
        LocalTrajectory::dim(self)
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn for_each_piece(&self, k: usize, f: &mut dyn FnMut(f64, f64, f64, f64)) {
        for (t0, x, v, tau) in self.lists[k].segments(self.horizon) {
            f(t0, x, v, tau);
        }
    }
}

/// Streaming first and second path moments of one scalar coordinate, split
/// into equal-time batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPathMoments {
    horizon: f64,
    batch_len: f64,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl ScalarPathMoments {
    pub fn new(horizon: f64, batches: usize) -> Self {
        let batches = batches.max(1);
        Self {
            horizon,
            batch_len: horizon / batches as f64,
            m1: vec![0.0; batches],
            m2: vec![0.0; batches],
        }
    }

    pub fn add_piece(&mut self, mut t0: f64, mut x: f64, v: f64, mut tau: f64) {
        let last = self.m1.len() - 1;
        let mut b = ((t0 / self.batch_len) as usize).min(last);
        while tau > 0.0 {
            let end = if b == last { f64::INFINITY } else { (b + 1) as f64 * self.batch_len };
            if end <= t0 {
                b += 1;
                continue;
            }
            let p = tau.min(end - t0);
            self.m1[b] += x * p + 0.5 * v * p * p;
            self.m2[b] += x * x * p + x * v * p * p + v * v * p * p * p / 3.0;
            x += v * p;
            t0 += p;
            tau -= p;
            b = (b + 1).min(last);
        }
    }

    fn batch_means(&self, m: &[f64]) -> Vec<f64> {
        m.iter().map(|a| a / self.batch_len).collect()
    }

    fn estimate(&self, total: f64, batch_values: &[f64]) -> PathEstimate {
        let n = batch_values.len();
        let std_error = if n > 1 {
            (mean_variance(batch_values).1 / n as f64).sqrt()
        } else {
            0.0
        };
        PathEstimate {
            value: total,
            horizon: self.horizon,
            std_error,
        }
    }

    /// Time average of `x`.
    pub fn mean(&self) -> PathEstimate {
        let total = self.m1.iter().sum::<f64>() / self.horizon;
        self.estimate(total, &self.batch_means(&self.m1))
    }

    /// Time average of `x^2`.
    pub fn second_moment(&self) -> PathEstimate {
        let total = self.m2.iter().sum::<f64>() / self.horizon;
        self.estimate(total, &self.batch_means(&self.m2))
    }

    /// Time-average variance; the error linearises `m2 - m1^2` around the
    /// overall mean.
    pub fn variance(&self) -> PathEstimate {
        let mean = self.mean().value;
        let value = self.second_moment().value - mean * mean;
        let g: Vec<f64> = self
            .batch_means(&self.m1)
            .iter()
            .zip(self.batch_means(&self.m2))
            .map(|(a1, a2)| a2 - 2.0 * mean * a1)
            .collect();
        self.estimate(value, &g)
    }
}

/// Path moments of selected coordinates, fed segment by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub coordinates: Vec<usize>,
    pub moments: Vec<ScalarPathMoments>,
}

impl MomentAccumulator {
    pub fn new(coordinates: Vec<usize>, horizon: f64, batches: usize) -> Self {
        let moments = coordinates.iter().map(|_| ScalarPathMoments::new(horizon, batches)).collect();
        Self { coordinates, moments }
    }

    /// Moments of every coordinate of a recorded path.
    pub fn from_path<P: CoordinatePath + ?Sized>(path: &P, coordinates: Vec<usize>, batches: usize) -> Self {
        let mut acc = Self::new(coordinates, path.horizon(), batches);
        for (i, &k) in acc.coordinates.iter().enumerate() {
            let m = &mut acc.moments[i];
            path.for_each_piece(k, &mut |t0, x, v, tau| m.add_piece(t0, x, v, tau));
        }
        acc
    }
}

impl SegmentSink for MomentAccumulator {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], _end: EventKind) {
        for (m, &k) in self.moments.iter_mut().zip(&self.coordinates) {
            m.add_piece(start_time, x[k], v[k], duration);
        }
    }
}

/// Streaming counterpart of [`discretize`]: records selected coordinates on
/// the mesh `0, delta, ...` up to `horizon` as segments arrive.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSink {
    pub coordinates: Vec<usize>,
    pub delta: f64,
    points: usize,
    /// One row per mesh time, ordered like `coordinates`.
    pub rows: Vec<Vec<f64>>,
}

impl MeshSink {
    pub fn new(coordinates: Vec<usize>, delta: f64, horizon: f64) -> Result<Self> {
        if !(delta > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need a positive mesh and a finite horizon, got ({delta}, {horizon})"
            )));
        }
        Ok(Self {
            coordinates,
            delta,
            points: 1 + (horizon / delta).floor() as usize,
            rows: Vec::new(),
        })
    }

    /// Values of the `j`-th recorded coordinate.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

impl SegmentSink for MeshSink {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        let stop = start_time + duration;
        while self.rows.len() < self.points {
            let t = self.rows.len() as f64 * self.delta;
            if t > stop && end != EventKind::Horizon {
                break;
            }
            let s = t - start_time;
            self.rows.push(self.coordinates.iter().map(|&k| x[k] + v[k] * s).collect());
        }
    }
}

/// Exact time average of `x_k^p`, `p` in {1, 2}, with a batch-means error.
pub fn path_integral_moment<P: CoordinatePath + ?Sized>(path: &P, k: usize, p: u32) -> Result<PathEstimate> {
    if k >= path.dim() {
        return Err(Error::DimensionMismatch {
            expected: path.dim(),
            found: k,
        });
    }
    if !(path.horizon() > 0.0) {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    }
    let m = &MomentAccumulator::from_path(path, vec![k], DEFAULT_BATCHES).moments[0];
    match p {
        1 => Ok(m.mean()),
        2 => Ok(m.second_moment()),
        _ => Err(Error::InvalidParameter(format!("moment order must be 1 or 2, got {p}"))),
    }
}

/// Positions of coordinate `k` on the mesh `0, delta, 2 delta, ...`, with
/// `1 + floor(T / delta)` points.
pub fn discretize_coordinate<P: CoordinatePath + ?Sized>(path: &P, k: usize, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("mesh must be positive, got {delta}")));
    }
    let points = 1 + (path.horizon() / delta).floor() as usize;
    let mut out = Vec::with_capacity(points);
    let mut last = (0.0, 0.0, 0.0);
    path.for_each_piece(k, &mut |t0, x, v, tau| {
        while out.len() < points {
            let t = out.len() as f64 * delta;
            if t > t0 + tau {
                break;
            }
            out.push(x + v * (t - t0));
        }
        last = (t0, x, v);
    });
    // mesh points lost to rounding at the very end
    while out.len() < points {
        let t = out.len() as f64 * delta;
        out.push(last.1 + last.2 * (t - last.0));
    }
    Ok(out)
}

/// Sample matrix with one row per mesh time.
pub fn discretize<P: CoordinatePath + ?Sized>(path: &P, delta: f64) -> Result<Vec<Vec<f64>>> {
    let cols = (0..path.dim())
        .map(|k| discretize_coordinate(path, k, delta))
        .collect::<Result<Vec<_>>>()?;
    let rows = cols.first().map_or(0, Vec::len);
    Ok((0..rows).map(|l| cols.iter().map(|c| c[l]).collect()).collect())
}

/// Effective sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub ess: f64,
    /// The input had zero variance; `ess` is then the sample count.
    pub degenerate: bool,
}

/// Batch-means effective sample size with batches of `floor(sqrt(N))`.
pub fn ess(samples: &[f64]) -> Result<Ess> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::InvalidParameter(format!("ESS needs at least 100 samples, got {n}")));
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = n / b;
    let (_, var) = mean_variance(samples);
    if !(var > 0.0) {
        return Ok(Ess {
            ess: n as f64,
            degenerate: true,
        });
    }
    let means: Vec<f64> = samples[..a * b]
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let (_, var_means) = mean_variance(&means);
    let ess = if var_means > 0.0 {
        n as f64 * var / (b as f64 * var_means)
    } else {
        f64::INFINITY
    };
    Ok(Ess {
        ess,
        degenerate: false,
    })
}
