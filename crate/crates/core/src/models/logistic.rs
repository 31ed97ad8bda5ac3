//! Bayesian logistic regression with non-negative covariates and the
//! subsampling local BPS.
//!
//! Each datum is a factor whose intensity is bounded, uniformly in time, by
//! a quantity depending only on the velocity. Alias tables over the data
//! make drawing a datum proportionally to its bound independent of the
//! number of data.

use std::io::BufRead;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::alias::AliasTable;
use crate::bps::{dot, Energy, EventKind, PhaseState, RunLimits};
use crate::error::{Error, Result};
use crate::factor_graph::{LocalOptions, LocalState, LocalTrajectory};
use crate::ppsim::{exp_draw, BOUND_TOLERANCE};

/// `log(1 + exp(a))` without overflow.
pub fn softplus(a: f64) -> f64 {
    (-a.abs()).exp().ln_1p() + a.max(0.0)
}

/// `1 / (1 + exp(-a))` without overflow.
pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    dim: usize,
    /// Row-major `R x d`.
    covariates: Vec<f64>,
    labels: Vec<u8>,
    prior_variance: f64,
}

impl LogisticData {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, prior_variance: f64) -> Result<Self> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::Data(format!(
                "need one label per datum and at least one datum, got {} rows and {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if !(prior_variance > 0.0) {
            return Err(Error::InvalidParameter(format!("prior variance must be positive, got {prior_variance}")));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Data("datum without covariates".into()));
        }
        let mut covariates = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!("datum {r} has {} covariates, expected {dim}", row.len())));
            }
            if let Some(c) = row.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
                return Err(Error::Data(format!("datum {r} has covariate {c}; covariates must be finite and >= 0")));
            }
            covariates.extend_from_slice(row);
        }
        if let Some(r) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Data(format!("datum {r} has label {}, expected 0 or 1", labels[r])));
        }
        Ok(Self {
            dim,
            covariates,
            labels,
            prior_variance,
        })
    }

    /// Reads rows of `label, covariate_1, ..., covariate_d` separated by
    /// commas, semicolons, tabs or spaces. Blank lines and lines starting
    /// with `#` are skipped, as is a first line that does not parse.
    pub fn from_reader<B: BufRead>(reader: B, prior_variance: f64) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("line {}: {e}", n + 1)))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if rows.is_empty() && labels.is_empty() && n == 0 => continue,
                Err(e) => return Err(Error::Data(format!("line {}: {e}", n + 1))),
            };
            if values.len() < 2 {
                return Err(Error::Data(format!("line {}: need a label and at least one covariate", n + 1)));
            }
            let label = match values[0] {
                0.0 => 0,
                1.0 => 1,
                y => return Err(Error::Data(format!("line {}: label {y} is not 0 or 1", n + 1))),
            };
            labels.push(label);
            rows.push(values[1..].to_vec());
        }
        Self::new(rows, labels, prior_variance)
    }

    pub fn load(path: impl AsRef<Path>, prior_variance: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file), prior_variance)
    }

    /// Covariates `U(0.1, 1.1)`, parameter from the prior, labels from the
    /// model. Returns the data and the parameter used.
    pub fn synthetic<R: Rng + ?Sized>(
        data: usize,
        dim: usize,
        prior_variance: f64,
        rng: &mut R,
    ) -> Result<(Self, Vec<f64>)> {
        let normal = Normal::new(0.0, prior_variance.sqrt())
            .map_err(|e| Error::InvalidParameter(format!("prior variance {prior_variance}: {e}")))?;
        let x: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let cov = Uniform::new(0.1, 1.1).expect("valid range");
        let mut rows = Vec::with_capacity(data);
        let mut labels = Vec::with_capacity(data);
        for _ in 0..data {
            let row: Vec<f64> = (0..dim).map(|_| cov.sample(rng)).collect();
            let p = logistic(dot(&row, &x));
            labels.push(u8::from(rng.random::<f64>() < p));
            rows.push(row);
        }
        Ok((Self::new(rows, labels, prior_variance)?, x))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn covariates(&self, r: usize) -> &[f64] {
        &self.covariates[r * self.dim..(r + 1) * self.dim]
    }

    pub fn label(&self, r: usize) -> u8 {
        self.labels[r]
    }

    /// `log(1 + exp<i_r, x>) - y_r <i_r, x>`.
    pub fn datum_energy(&self, r: usize, x: &[f64]) -> f64 {
        let a = dot(self.covariates(r), x);
        softplus(a) - f64::from(self.labels[r]) * a
    }

    /// `i_r (logistic<i_r, x> - y_r)`.
    pub fn datum_gradient(&self, r: usize, x: &[f64], grad: &mut [f64]) {
        let iota = self.covariates(r);
        let w = logistic(dot(iota, x)) - f64::from(self.labels[r]);
        for (g, i) in grad.iter_mut().zip(iota) {
            *g = w * i;
        }
    }

    /// Time-uniform bound on the intensity of datum `r` for velocity `v`.
    pub fn per_datum_bound(&self, r: usize, v: &[f64]) -> f64 {
        let sign = if self.labels[r] == 1 { -1.0 } else { 1.0 };
        self.covariates(r)
            .iter()
            .zip(v)
            .filter(|(_, vk)| sign * **vk >= 0.0)
            .map(|(i, vk)| i * vk.abs())
            .sum()
    }
}

impl Energy for LogisticData {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, x) / self.prior_variance + (0..self.len()).map(|r| self.datum_energy(r, x)).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = xi / self.prior_variance;
        }
        let mut gr = vec![0.0; self.dim];
        for r in 0..self.len() {
            self.datum_gradient(r, x, &mut gr);
            grad.iter_mut().zip(&gr).for_each(|(g, a)| *g += a);
        }
    }
}

/// Full posterior energy and gradient.
pub fn logistic_energy_grad(data: &LogisticData, x: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; data.dim()];
    data.gradient(x, &mut g);
    (data.energy(x), g)
}

/// Per-datum intensity bound; see [`LogisticData::per_datum_bound`].
pub fn per_datum_bound(data: &LogisticData, r: usize, v: &[f64]) -> f64 {
    data.per_datum_bound(r, v)
}

/// Class-conditional covariate sums and alias tables over the data.
#[derive(Debug, Clone)]
pub struct AliasTables {
    /// `class_sums[c][k] = sum_r i_rk [y_r = c]`.
    class_sums: [Vec<f64>; 2],
    /// Data indices of each class.
    members: [Vec<usize>; 2],
    /// `tables[k][c]` samples a member of class `c` proportionally to `i_rk`.
    tables: Vec<[Option<AliasTable>; 2]>,
}

impl AliasTables {
    pub fn new(data: &LogisticData) -> Self {
        let members: [Vec<usize>; 2] =
            [0u8, 1].map(|c| (0..data.len()).filter(|&r| data.label(r) == c).collect());
        let d = data.dim();
        let class_sums =
            [0, 1].map(|c: usize| (0..d).map(|k| members[c].iter().map(|&r| data.covariates(r)[k]).sum()).collect());
        let tables = (0..d)
            .map(|k| {
                [0, 1].map(|c: usize| {
                    let w: Vec<f64> = members[c].iter().map(|&r| data.covariates(r)[k]).collect();
                    AliasTable::new(&w).ok()
                })
            })
            .collect();
        Self {
            class_sums,
            members,
            tables,
        }
    }

    pub fn dim(&self) -> usize {
        self.tables.len()
    }

    /// `sum_r i_rk [y_r = c]`.
    pub fn class_sum(&self, k: usize, c: usize) -> f64 {
        self.class_sums[c][k]
    }

    fn class_for(vk: f64) -> usize {
        usize::from(vk < 0.0)
    }

    /// Sum of the per-datum bounds, in `O(d)`.
    pub fn chi_bar(&self, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(k, vk)| vk.abs() * self.class_sums[Self::class_for(*vk)][k])
            .sum()
    }

    /// Draws a datum with probability proportional to its bound.
    pub fn sample<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R) -> Result<usize> {
        let weight = |k: usize| v[k].abs() * self.class_sums[Self::class_for(v[k])][k];
        let total: f64 = (0..v.len()).map(weight).sum();
        if !(total > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let mut u = rng.random::<f64>() * total;
        let mut k = v.len() - 1;
        for j in 0..v.len() {
            let w = weight(j);
            if u < w {
                k = j;
                break;
            }
            u -= w;
        }
        // rounding may leave k on a zero-weight coordinate
        while weight(k) == 0.0 {
            k -= 1;
        }
        let c = Self::class_for(v[k]);
        let table = self.tables[k][c].as_ref().ok_or(Error::EmptyDistribution)?;
        Ok(self.members[c][table.sample(rng)])
    }
}

pub fn precompute_alias(data: &LogisticData) -> AliasTables {
    AliasTables::new(data)
}

pub fn sample_thinned_factor<R: Rng + ?Sized>(tables: &AliasTables, v: &[f64], rng: &mut R) -> Result<usize> {
    tables.sample(v, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticBpsOptions {
    pub refresh_rate: f64,
    /// Window over which the prior bound is held constant.
    pub delta: f64,
    pub limits: RunLimits,
    pub record_events: bool,
}

impl Default for LogisticBpsOptions {
    fn default() -> Self {
        Self {
            refresh_rate: 0.5,
            delta: 0.5,
            limits: RunLimits::default(),
            record_events: false,
        }
    }
}

/// Work counters of a logistic run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogisticCounters {
    pub data_candidates: u64,
    pub datum_gradient_evaluations: u64,
    pub prior_candidates: u64,
    /// Largest intensity / bound ratio seen, in parts per million.
    pub max_ratio_ppm: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRun {
    pub trajectory: LocalTrajectory,
    pub counters: LogisticCounters,
}

/// Local BPS for logistic regression.
///
/// A single exponential clock runs at `prior bound + data bound + refresh
/// rate`; each ring is assigned to the data, a refreshment or the prior in
/// proportion to those rates. Data candidates cost one datum gradient.
pub fn logistic_local_bps<R: Rng>(
    data: &LogisticData,
    tables: &AliasTables,
    initial: &PhaseState,
    horizon: f64,
    opts: LogisticBpsOptions,
    rng: &mut R,
) -> Result<LogisticRun> {
    let d = data.dim();
    if initial.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.dim(),
        });
    }
    if !(opts.delta > 0.0) || !(opts.refresh_rate >= 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need delta > 0, refresh rate >= 0 and horizon > 0, got ({}, {}, {horizon})",
            opts.delta, opts.refresh_rate
        )));
    }
    let inv_var = 1.0 / data.prior_variance();
    let local_opts = LocalOptions {
        limits: opts.limits,
        record_events: opts.record_events,
        check_sparsity: cfg!(debug_assertions),
    };
    let mut state = LocalState::new(&initial.position, &initial.velocity, local_opts);
    let mut counters = LogisticCounters::default();
    let all: Vec<usize> = (0..d).collect();
    let (mut x, mut v) = (Vec::with_capacity(d), Vec::with_capacity(d));
    let mut g = vec![0.0; d];
    let mut max_ratio: f64 = 0.0;
    let started = Instant::now();

    let prior_bound = |x: &[f64], v: &[f64], window: f64| -> f64 {
        inv_var * (dot(x, v) + window * dot(v, v)).max(0.0)
    };
    state.gather(&all, &mut x, &mut v);
    let mut window_end = opts.delta;
    let mut chi_prior = prior_bound(&x, &v, opts.delta);

    loop {
        opts.limits.check(state.stats.total_events(), started)?;
        let chi_data = tables.chi_bar(&v);
        let rate = chi_prior + chi_data + opts.refresh_rate;
        let t = state.clock + if rate > 0.0 { exp_draw(rng) / rate } else { f64::INFINITY };
        if t > window_end {
            if window_end >= horizon {
                break;
            }
            state.clock = window_end;
            window_end += opts.delta;
            state.stats.window_renewals += 1;
            state.gather(&all, &mut x, &mut v);
            chi_prior = prior_bound(&x, &v, opts.delta);
            continue;
        }
        if t >= horizon {
            break;
        }
        state.clock = t;
        state.gather(&all, &mut x, &mut v);
        let u = rng.random::<f64>() * rate;
        if u < chi_data {
            counters.data_candidates += 1;
            let r = tables.sample(&v, rng)?;
            let bound = data.per_datum_bound(r, &v);
            data.datum_gradient(r, &x, &mut g);
            counters.datum_gradient_evaluations += 1;
            let intensity = dot(&g, &v).max(0.0);
            check_bound(intensity, bound, t, &mut max_ratio)?;
            if rng.random::<f64>() * bound < intensity {
                let n: Vec<usize> = (0..d).filter(|&k| data.covariates(r)[k] != 0.0).collect();
                let gn: Vec<f64> = n.iter().map(|&k| g[k]).collect();
                let mut block: Vec<f64> = n.iter().map(|&k| v[k]).collect();
                state.bounce(&n, &gn, &mut block)?;
                state.log(EventKind::Bounce, Some(r), &n);
            } else {
                state.stats.rejections += 1;
            }
        } else if u < chi_data + opts.refresh_rate {
            let w = crate::bps::standard_normal(d, rng);
            for (k, wk) in w.into_iter().enumerate() {
                state.set_velocity(k, wk);
            }
            state.stats.refreshes += 1;
            state.log(EventKind::Refresh, None, &all);
        } else {
            counters.prior_candidates += 1;
            let intensity = inv_var * dot(&x, &v).max(0.0);
            check_bound(intensity, chi_prior, t, &mut max_ratio)?;
            if rng.random::<f64>() * chi_prior < intensity {
                g.iter_mut().zip(&x).for_each(|(gk, xk)| *gk = inv_var * xk);
                let mut block = v.clone();
                state.bounce(&all, &g, &mut block)?;
                // the prior factor is reported as index R
                state.log(EventKind::Bounce, Some(data.len()), &all);
            } else {
                state.stats.rejections += 1;
            }
        }
        state.gather(&all, &mut x, &mut v);
        chi_prior = prior_bound(&x, &v, window_end - state.clock);
    }
    counters.max_ratio_ppm = (max_ratio * 1e6).round() as u64;
    Ok(LogisticRun {
        trajectory: state.finish(horizon),
        counters,
    })
}

fn check_bound(intensity: f64, bound: f64, time: f64, max_ratio: &mut f64) -> Result<()> {
    if intensity > bound * (1.0 + BOUND_TOLERANCE) {
        return Err(Error::BoundViolation { time, intensity, bound });
    }
    if bound > 0.0 {
        *max_ratio = max_ratio.max(intensity / bound);
    }
    Ok(())
}
