//! Factor-graph targets and the local bouncy particle sampler.
//!
//! The energy is a sum of factors `U(x) = sum_f U_f(x_f)`, each depending on
//! a small neighbourhood of coordinates. A bounce triggered by factor `f`
//! only touches the velocity block `v_f`, so only the candidate bounce times
//! of factors sharing a coordinate with `f` need to be recomputed.

mod event_list;
mod heap;
mod queue;
mod thinning;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::bps::{intensity_from_gradient, reflect_in_place, EventKind, RunStats};
use crate::error::{Error, Result};
use crate::ppsim::Arrival;

pub use event_list::{reconstruct_coordinate, CoordinateEvent, CoordinateEventList};
pub use heap::IndexedMinHeap;
pub use queue::{local_bps_queue, LocalBpsQueue};
pub use thinning::{local_bps_thinning, BoundMode, LocalBpsThinning, ThinningOptions};

/// One factor `U_f` of the energy, defined on the coordinates of its
/// neighbourhood only.
pub trait Factor: Send + Sync {
    /// Sorted, distinct coordinate indices.
    fn neighborhood(&self) -> &[usize];

    fn energy(&self, x_f: &[f64]) -> f64;

    /// Gradient with respect to the neighbourhood coordinates.
    fn gradient(&self, x_f: &[f64], grad: &mut [f64]);

    /// First arrival of the local bounce process along `(x_f, v_f)`.
    fn first_arrival(&self, x_f: &[f64], v_f: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<Arrival>;

    /// Constant bound on the local intensity over `[0, delta)`, if the
    /// factor provides one.
    fn bound(&self, _x_f: &[f64], _v_f: &[f64], _delta: f64) -> Option<f64> {
        None
    }
}

pub struct FactorGraph {
    dim: usize,
    factors: Vec<Box<dyn Factor>>,
    adjacency: Vec<Vec<usize>>,
    factors_of: Vec<Vec<usize>>,
}

impl std::fmt::Debug for FactorGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FactorGraph")
            .field("dim", &self.dim)
            .field("factors", &self.factors.len())
            .finish()
    }
}

impl FactorGraph {
    pub fn new(dim: usize, factors: Vec<Box<dyn Factor>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("factor graph needs at least one factor".into()));
        }
        let mut factors_of = vec![Vec::new(); dim];
        for (f, factor) in factors.iter().enumerate() {
            let n = factor.neighborhood();
            if n.is_empty() {
                return Err(Error::InvalidParameter(format!("factor {f} has an empty neighbourhood")));
            }
            if n.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "factor {f} neighbourhood must be sorted and distinct"
                )));
            }
            for &k in n {
                if k >= dim {
                    return Err(Error::InvalidParameter(format!(
                        "factor {f} touches coordinate {k} outside dimension {dim}"
                    )));
                }
                factors_of[k].push(f);
            }
        }
        if let Some(k) = factors_of.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("coordinate {k} belongs to no factor")));
        }
        let adjacency = factors
            .iter()
            .map(|factor| {
                let mut adj: Vec<usize> = factor
                    .neighborhood()
                    .iter()
                    .flat_map(|&k| factors_of[k].iter().copied())
                    .collect();
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect();
        Ok(Self {
            dim,
            factors,
            adjacency,
            factors_of,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor(&self, f: usize) -> &dyn Factor {
        self.factors[f].as_ref()
    }

    pub fn neighborhood(&self, f: usize) -> &[usize] {
        self.factors[f].neighborhood()
    }

    /// Factors sharing at least one coordinate with `f`, including `f`.
    pub fn adjacency(&self, f: usize) -> &[usize] {
        &self.adjacency[f]
    }

    /// Factors whose neighbourhood contains coordinate `k`.
    pub fn factors_of(&self, k: usize) -> &[usize] {
        &self.factors_of[k]
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|factor| factor.energy(&gather(x, factor.neighborhood())))
            .sum()
    }

    pub fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let mut g = Vec::new();
        for factor in &self.factors {
            let n = factor.neighborhood();
            g.resize(n.len(), 0.0);
            factor.gradient(&gather(x, n), &mut g);
            for (&k, gk) in n.iter().zip(&g) {
                grad[k] += gk;
            }
        }
    }
}

pub(crate) fn gather(x: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&k| x[k]).collect()
}

/// `max(0, <grad U_f(x_f), v_f>)`.
pub fn local_intensity(factor: &dyn Factor, x_f: &[f64], v_f: &[f64]) -> f64 {
    let mut g = vec![0.0; x_f.len()];
    factor.gradient(x_f, &mut g);
    intensity_from_gradient(&g, v_f)
}

/// Reflects the block of the full velocity `v` on the neighbourhood of
/// `factor` against the local gradient; other coordinates are left alone.
pub fn local_reflect(factor: &dyn Factor, x_f: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = factor.neighborhood();
    let mut g = vec![0.0; n.len()];
    factor.gradient(x_f, &mut g);
    let mut block = gather(v, n);
    reflect_in_place(&g, &mut block)?;
    let mut out = v.to_vec();
    for (&k, b) in n.iter().zip(block) {
        out[k] = b;
    }
    Ok(out)
}

/// Resamples the velocity block of one uniformly chosen factor. Returns the
/// new velocity, the chosen factor and the factors whose candidates are
/// affected.
pub fn local_refresh<'g, R: Rng + ?Sized>(
    graph: &'g FactorGraph,
    v: &[f64],
    rng: &mut R,
) -> (Vec<f64>, usize, &'g [usize]) {
    let f = rng.random_range(0..graph.len());
    let mut out = v.to_vec();
    for &k in graph.neighborhood(f) {
        out[k] = StandardNormal.sample(rng);
    }
    (out, f, graph.adjacency(f))
}

/// Options shared by the local samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub limits: crate::bps::RunLimits,
    /// Keep a log of every event.
    pub record_events: bool,
    /// Compare the full velocity before and after every bounce and panic if
    /// a coordinate outside the bouncing neighbourhood changed.
    pub check_sparsity: bool,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            limits: Default::default(),
            record_events: false,
            check_sparsity: cfg!(debug_assertions),
        }
    }
}

/// One entry of the optional event log of a local run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Factor that bounced or whose block was refreshed.
    pub factor: Option<usize>,
    /// Coordinates whose velocity changed, with post-event position and
    /// velocity.
    pub coordinates: Vec<(usize, f64, f64)>,
}

/// Output of a local run: one event list per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrajectory {
    pub lists: Vec<CoordinateEventList>,
    pub horizon: f64,
    pub stats: RunStats,
    /// Bounces whose sparsity was verified.
    pub sparsity_checks: u64,
    pub events: Vec<LocalEvent>,
}

impl LocalTrajectory {
    pub fn dim(&self) -> usize {
        self.lists.len()
    }

    pub fn position_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                time: t,
                start: 0.0,
                end: self.horizon,
            });
        }
        self.lists.iter().map(|l| l.position_at(t)).collect()
    }
}

/// Mutable state shared by the local samplers: the event lists double as
/// the current state, since the last entry of each list gives the position
/// and velocity of that coordinate.
pub(crate) struct LocalState {
    pub lists: Vec<CoordinateEventList>,
    pub clock: f64,
    pub stats: RunStats,
    pub sparsity_checks: u64,
    pub events: Vec<LocalEvent>,
    pub options: LocalOptions,
}

impl LocalState {
    pub fn new(x: &[f64], v: &[f64], options: LocalOptions) -> Self {
        Self {
            lists: x
                .iter()
                .zip(v)
                .map(|(&xk, &vk)| CoordinateEventList::new(xk, vk))
                .collect(),
            clock: 0.0,
            stats: RunStats::default(),
            sparsity_checks: 0,
            events: Vec::new(),
            options,
        }
    }

    pub fn position(&self, k: usize) -> f64 {
        self.lists[k].extrapolate(self.clock)
    }

    pub fn velocity(&self, k: usize) -> f64 {
        self.lists[k].last().velocity
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.lists.iter().map(|l| l.last().velocity).collect()
    }

    pub fn gather(&self, idx: &[usize], x: &mut Vec<f64>, v: &mut Vec<f64>) {
        x.clear();
        v.clear();
        for &k in idx {
            x.push(self.position(k));
            v.push(self.velocity(k));
        }
    }

    pub fn set_velocity(&mut self, k: usize, velocity: f64) {
        let t = self.clock;
        let list = &mut self.lists[k];
        let position = list.extrapolate(t);
        list.push(position, velocity, t);
    }

    pub fn log(&mut self, kind: EventKind, factor: Option<usize>, coords: &[usize]) {
        if self.options.record_events {
            let coordinates = coords
                .iter()
                .map(|&k| {
                    let last = self.lists[k].last();
                    (k, last.position, last.velocity)
                })
                .collect();
            self.events.push(LocalEvent {
                time: self.clock,
                kind,
                factor,
                coordinates,
            });
        }
    }

    /// Reflects the block `idx` against `grad` at the current clock.
    pub fn bounce(&mut self, idx: &[usize], grad: &[f64], v_block: &mut [f64]) -> Result<()> {
        let before = self.options.check_sparsity.then(|| self.velocities());
        reflect_in_place(grad, v_block)?;
        for (&k, &vk) in idx.iter().zip(v_block.iter()) {
            self.set_velocity(k, vk);
        }
        if let Some(before) = before {
            let after = self.velocities();
            for k in 0..before.len() {
                if idx.binary_search(&k).is_err() {
                    assert_eq!(
                        before[k].to_bits(),
                        after[k].to_bits(),
                        "bounce changed the velocity of coordinate {k} outside the factor"
                    );
                }
            }
            self.sparsity_checks += 1;
        }
        self.stats.bounces += 1;
        self.stats.gradient_evaluations += 1;
        Ok(())
    }

    /// Closes every list with an entry at `horizon`.
    pub fn finish(mut self, horizon: f64) -> LocalTrajectory {
        self.clock = horizon;
        for list in &mut self.lists {
            let last = *list.last();
            let position = list.extrapolate(horizon);
            list.push(position, last.velocity, horizon);
        }
        LocalTrajectory {
            lists: self.lists,
            horizon,
            stats: self.stats,
            sparsity_checks: self.sparsity_checks,
            events: self.events,
        }
    }
}

pub(crate) fn validate_initial(graph: &FactorGraph, x: &[f64], v: &[f64], horizon: f64) -> Result<()> {
    for len in [x.len(), v.len()] {
        if len != graph.dim() {
            return Err(Error::DimensionMismatch {
                expected: graph.dim(),
                found: len,
            });
        }
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be positive and finite, got {horizon}")));
    }
    Ok(())
}
