//! Local BPS by thinning a single superposed clock.
//!
//! Every factor supplies a constant bound on its intensity over a window of
//! length `delta`. One exponential clock runs at the summed bound (plus the
//! refreshment rate); at each ring a factor is picked proportionally to its
//! bound and the bounce is accepted with probability intensity / bound.

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, RngCore};

use super::{local_refresh, validate_initial, FactorGraph, LocalOptions, LocalState, LocalTrajectory};
use crate::alias::AliasTable;
use crate::bps::{dot, EventKind, PhaseState, RefreshKind, RefreshmentScheme};
use crate::error::{Error, Result};
use crate::ppsim::{exp_draw, BOUND_TOLERANCE};

/// How factor bounds enter the superposed clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// Each factor uses its own bound.
    PerFactor,
    /// Every factor uses the largest bound, so factors are picked uniformly.
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinningOptions {
    /// Window length over which bounds are valid.
    pub delta: f64,
    /// Factors drawn without replacement per candidate.
    pub minibatch: usize,
    pub bound_mode: BoundMode,
}

impl ThinningOptions {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            minibatch: 1,
            bound_mode: BoundMode::PerFactor,
        }
    }

    fn validate(&self, factors: usize) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("thinning window must be positive, got {}", self.delta)));
        }
        if self.minibatch == 0 || self.minibatch > factors {
            return Err(Error::InvalidParameter(format!(
                "minibatch size must be in 1..={factors}, got {}",
                self.minibatch
            )));
        }
        if self.minibatch > 1 && self.bound_mode != BoundMode::Common {
            return Err(Error::InvalidParameter(
                "minibatches larger than one need a common bound shared by all factors".into(),
            ));
        }
        Ok(())
    }
}

/// Alias tables are rebuilt lazily for small graphs; larger ones use a sum
/// tree with logarithmic updates.
const ALIAS_MAX_FACTORS: usize = 64;

enum Selector {
    Alias { weights: Vec<f64>, table: Option<AliasTable> },
    Tree { leaves: usize, tree: Vec<f64> },
}

impl Selector {
    fn new(n: usize) -> Self {
        if n <= ALIAS_MAX_FACTORS {
            Selector::Alias {
                weights: vec![0.0; n],
                table: None,
            }
        } else {
            let leaves = n.next_power_of_two();
            Selector::Tree {
                leaves,
                tree: vec![0.0; 2 * leaves],
            }
        }
    }

    fn set(&mut self, i: usize, w: f64) {
        match self {
            Selector::Alias { weights, table } => {
                weights[i] = w;
                *table = None;
            }
            Selector::Tree { leaves, tree } => {
                let mut j = *leaves + i;
                tree[j] = w;
                while j > 1 {
                    j /= 2;
                    tree[j] = tree[2 * j] + tree[2 * j + 1];
                }
            }
        }
    }

    fn total(&self) -> f64 {
        match self {
            Selector::Alias { weights, .. } => weights.iter().sum(),
            Selector::Tree { tree, .. } => tree[1],
        }
    }

    fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        match self {
            Selector::Alias { weights, table } => {
                if table.is_none() {
                    *table = Some(AliasTable::new(weights)?);
                }
                Ok(table.as_ref().unwrap().sample(rng))
            }
            Selector::Tree { leaves, tree } => {
                if !(tree[1] > 0.0) {
                    return Err(Error::EmptyDistribution);
                }
                loop {
                    let mut u = rng.random::<f64>() * tree[1];
                    let mut j = 1;
                    while j < *leaves {
                        let left = tree[2 * j];
                        if u < left {
                            j *= 2;
                        } else {
                            u -= left;
                            j = 2 * j + 1;
                        }
                    }
                    // rounding can land on an empty leaf
                    if tree[j] > 0.0 {
                        return Ok(j - *leaves);
                    }
                }
            }
        }
    }
}

/// Thinning-based local BPS.
pub struct LocalBpsThinning<'g, R> {
    graph: &'g FactorGraph,
    scheme: RefreshmentScheme,
    opts: ThinningOptions,
    horizon: f64,
    rng: R,
    state: LocalState,
    bounds: Vec<f64>,
    common: f64,
    selector: Selector,
    window_end: f64,
    started: Instant,
    x: Vec<f64>,
    v: Vec<f64>,
    g: Vec<f64>,
}

impl<'g, R: RngCore> LocalBpsThinning<'g, R> {
    pub fn new(
        graph: &'g FactorGraph,
        scheme: RefreshmentScheme,
        initial: &PhaseState,
        horizon: f64,
        opts: ThinningOptions,
        options: LocalOptions,
        rng: R,
    ) -> Result<Self> {
        validate_initial(graph, &initial.position, &initial.velocity, horizon)?;
        opts.validate(graph.len())?;
        let mut s = Self {
            graph,
            scheme,
            opts,
            horizon,
            rng,
            state: LocalState::new(&initial.position, &initial.velocity, options),
            bounds: vec![0.0; graph.len()],
            common: 0.0,
            selector: Selector::new(graph.len()),
            window_end: 0.0,
            started: Instant::now(),
            x: Vec::new(),
            v: Vec::new(),
            g: Vec::new(),
        };
        s.open_window()?;
        Ok(s)
    }

    fn bound_of(&mut self, f: usize, window: f64) -> Result<f64> {
        self.state.gather(self.graph.neighborhood(f), &mut self.x, &mut self.v);
        self.graph
            .factor(f)
            .bound(&self.x, &self.v, window)
            .ok_or_else(|| Error::InvalidParameter(format!("factor {f} provides no intensity bound")))
    }

    fn set_bound(&mut self, f: usize, b: f64) {
        self.bounds[f] = b;
        if self.opts.bound_mode == BoundMode::PerFactor {
            self.selector.set(f, b);
        }
    }

    fn recompute_common(&mut self) {
        if self.opts.bound_mode == BoundMode::Common {
            self.common = self.bounds.iter().copied().fold(0.0, f64::max);
        }
    }

    fn total_bound(&self) -> f64 {
        match self.opts.bound_mode {
            BoundMode::PerFactor => self.selector.total(),
            BoundMode::Common => self.common * self.graph.len() as f64,
        }
    }

    fn open_window(&mut self) -> Result<()> {
        self.window_end = self.state.clock + self.opts.delta;
        for f in 0..self.graph.len() {
            let b = self.bound_of(f, self.opts.delta)?;
            self.set_bound(f, b);
        }
        self.recompute_common();
        Ok(())
    }

    fn update_bounds(&mut self, factors: &[usize]) -> Result<()> {
        let remaining = self.window_end - self.state.clock;
        for &f in factors {
            let b = self.bound_of(f, remaining)?;
            self.set_bound(f, b);
        }
        self.recompute_common();
        Ok(())
    }

    /// Runs to the horizon and returns the event lists.
    pub fn run(mut self) -> Result<LocalTrajectory> {
        loop {
            let s = &self.state.stats;
            self.state.options.limits.check(s.total_events(), self.started)?;
            let bound = self.total_bound();
            let rate = bound + self.scheme.rate;
            let t = self.state.clock + if rate > 0.0 { exp_draw(&mut self.rng) / rate } else { f64::INFINITY };
            if t >= self.window_end {
                if self.window_end >= self.horizon {
                    break;
                }
                self.state.clock = self.window_end;
                self.state.stats.window_renewals += 1;
                self.open_window()?;
                continue;
            }
            if t >= self.horizon {
                break;
            }
            self.state.clock = t;
            if self.rng.random::<f64>() * rate < self.scheme.rate {
                self.refresh()?;
            } else if self.opts.minibatch == 1 {
                self.single_candidate()?;
            } else {
                self.minibatch_candidate()?;
            }
        }
        Ok(self.state.finish(self.horizon))
    }

    fn refresh(&mut self) -> Result<()> {
        let graph = self.graph;
        self.state.stats.refreshes += 1;
        if let RefreshKind::Local = self.scheme.kind {
            let v = self.state.velocities();
            let (w, f, affected) = local_refresh(graph, &v, &mut self.rng);
            let n = graph.neighborhood(f);
            for &k in n {
                self.state.set_velocity(k, w[k]);
            }
            self.state.log(EventKind::Refresh, Some(f), n);
            return self.update_bounds(affected);
        }
        let v = self.state.velocities();
        let w = self.scheme.refresh(&v, &mut self.rng)?;
        for (k, wk) in w.into_iter().enumerate() {
            self.state.set_velocity(k, wk);
        }
        if self.state.options.record_events {
            let all: Vec<usize> = (0..graph.dim()).collect();
            self.state.log(EventKind::Refresh, None, &all);
        }
        let all: Vec<usize> = (0..graph.len()).collect();
        self.update_bounds(&all)
    }

    fn check_ratio(&self, intensity: f64, bound: f64) -> Result<()> {
        if intensity > bound * (1.0 + BOUND_TOLERANCE) {
            return Err(Error::BoundViolation {
                time: self.state.clock,
                intensity,
                bound,
            });
        }
        Ok(())
    }

    fn single_candidate(&mut self) -> Result<()> {
        let graph = self.graph;
        let (f, bound) = match self.opts.bound_mode {
            BoundMode::PerFactor => {
                let f = self.selector.sample(&mut self.rng)?;
                (f, self.bounds[f])
            }
            BoundMode::Common => (self.rng.random_range(0..graph.len()), self.common),
        };
        let n = graph.neighborhood(f);
        self.state.gather(n, &mut self.x, &mut self.v);
        self.g.resize(n.len(), 0.0);
        graph.factor(f).gradient(&self.x, &mut self.g);
        let intensity = dot(&self.g, &self.v).max(0.0);
        self.check_ratio(intensity, bound)?;
        if self.rng.random::<f64>() * bound >= intensity {
            self.state.stats.rejections += 1;
            return Ok(());
        }
        let mut block = std::mem::take(&mut self.v);
        self.state.bounce(n, &self.g, &mut block)?;
        self.v = block;
        self.state.log(EventKind::Bounce, Some(f), n);
        self.update_bounds(graph.adjacency(f))
    }

    fn minibatch_candidate(&mut self) -> Result<()> {
        let graph = self.graph;
        let s = self.opts.minibatch;
        let mut chosen = index::sample(&mut self.rng, graph.len(), s).into_vec();
        chosen.sort_unstable();
        let mut union: Vec<usize> = chosen.iter().flat_map(|&f| graph.neighborhood(f).iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        let mut grad = vec![0.0; union.len()];
        for &f in &chosen {
            let n = graph.neighborhood(f);
            self.state.gather(n, &mut self.x, &mut self.v);
            self.g.resize(n.len(), 0.0);
            graph.factor(f).gradient(&self.x, &mut self.g);
            for (&k, gk) in n.iter().zip(&self.g) {
                grad[union.binary_search(&k).unwrap()] += gk;
            }
        }
        let mut block: Vec<f64> = union.iter().map(|&k| self.state.velocity(k)).collect();
        let intensity = dot(&grad, &block).max(0.0);
        let bound = s as f64 * self.common;
        self.check_ratio(intensity, bound)?;
        if self.rng.random::<f64>() * bound >= intensity {
            self.state.stats.rejections += 1;
            return Ok(());
        }
        self.state.bounce(&union, &grad, &mut block)?;
        self.state.log(EventKind::Bounce, None, &union);
        let mut affected: Vec<usize> = chosen.iter().flat_map(|&f| graph.adjacency(f).iter().copied()).collect();
        affected.sort_unstable();
        affected.dedup();
        self.update_bounds(&affected)
    }
}

/// Runs the thinning local BPS to `horizon`.
pub fn local_bps_thinning<R: Rng>(
    graph: &FactorGraph,
    scheme: &RefreshmentScheme,
    initial: &PhaseState,
    horizon: f64,
    opts: ThinningOptions,
    options: LocalOptions,
    rng: &mut R,
) -> Result<LocalTrajectory> {
    LocalBpsThinning::new(graph, *scheme, initial, horizon, opts, options, rng)?.run()
}
