//! Local BPS driven by a priority queue of per-factor candidate times.

use std::time::Instant;

use rand::{Rng, RngCore};

use super::{local_refresh, validate_initial, FactorGraph, IndexedMinHeap, LocalOptions, LocalState, LocalTrajectory};
use crate::bps::{EventKind, PhaseState, RefreshKind, RefreshmentScheme};
use crate::error::Result;

/// What a single [`LocalBpsQueue::step`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub time: f64,
    pub kind: EventKind,
    pub factor: Option<usize>,
}

/// Local BPS with one live candidate bounce time per factor.
///
/// A bounce of factor `f` resimulates the candidates of the factors adjacent
/// to `f` (including `f`) only. A global refreshment rebuilds the whole
/// queue; a local refreshment resimulates the adjacency of the refreshed
/// factor.
pub struct LocalBpsQueue<'g, R> {
    graph: &'g FactorGraph,
    scheme: RefreshmentScheme,
    horizon: f64,
    rng: R,
    state: LocalState,
    queue: IndexedMinHeap,
    next_refresh: f64,
    started: Instant,
    done: bool,
    x: Vec<f64>,
    v: Vec<f64>,
    g: Vec<f64>,
}

impl<'g, R: RngCore> LocalBpsQueue<'g, R> {
    pub fn new(
        graph: &'g FactorGraph,
        scheme: RefreshmentScheme,
        initial: &PhaseState,
        horizon: f64,
        options: LocalOptions,
        rng: R,
    ) -> Result<Self> {
        validate_initial(graph, &initial.position, &initial.velocity, horizon)?;
        let mut s = Self {
            graph,
            scheme,
            horizon,
            rng,
            state: LocalState::new(&initial.position, &initial.velocity, options),
            queue: IndexedMinHeap::new(vec![f64::INFINITY; graph.len()]),
            next_refresh: f64::INFINITY,
            started: Instant::now(),
            done: false,
            x: Vec::new(),
            v: Vec::new(),
            g: Vec::new(),
        };
        s.next_refresh = s.scheme.next_time(&mut s.rng);
        s.rebuild()?;
        Ok(s)
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    /// Live candidate time of factor `f` (`+inf` if it never fires before
    /// the horizon).
    pub fn candidate(&self, f: usize) -> f64 {
        self.queue.key(f)
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.state.velocities()
    }

    pub fn position(&self) -> Vec<f64> {
        (0..self.graph.dim()).map(|k| self.state.position(k)).collect()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn resimulate(&mut self, f: usize) -> Result<()> {
        let n = self.graph.neighborhood(f);
        self.state.gather(n, &mut self.x, &mut self.v);
        let clock = self.state.clock;
        let arrival = self
            .graph
            .factor(f)
            .first_arrival(&self.x, &self.v, self.horizon - clock, &mut self.rng)?;
        self.queue.update(f, arrival.time().map_or(f64::INFINITY, |tau| clock + tau));
        Ok(())
    }

    fn rebuild(&mut self) -> Result<()> {
        for f in 0..self.graph.len() {
            self.resimulate(f)?;
        }
        Ok(())
    }

    /// Processes the next event. Returns `None` once the horizon is reached.
    pub fn step(&mut self) -> Result<Option<StepOutcome>> {
        if self.done {
            return Ok(None);
        }
        let (f, t_f) = self.queue.peek().expect("factor graphs are non-empty");
        if t_f.min(self.next_refresh) >= self.horizon {
            self.done = true;
            self.state.clock = self.horizon;
            return Ok(Some(StepOutcome {
                time: self.horizon,
                kind: EventKind::Horizon,
                factor: None,
            }));
        }
        let s = &self.state.stats;
        self.state.options.limits.check(s.bounces + s.refreshes, self.started)?;

        if self.next_refresh <= t_f {
            self.state.clock = self.next_refresh;
            let factor = self.refresh()?;
            self.next_refresh = self.state.clock + self.scheme.next_time(&mut self.rng);
            self.state.stats.refreshes += 1;
            return Ok(Some(StepOutcome {
                time: self.state.clock,
                kind: EventKind::Refresh,
                factor,
            }));
        }

        self.state.clock = t_f;
        let n = self.graph.neighborhood(f);
        self.state.gather(n, &mut self.x, &mut self.v);
        self.g.resize(n.len(), 0.0);
        self.graph.factor(f).gradient(&self.x, &mut self.g);
        let mut block = std::mem::take(&mut self.v);
        self.state.bounce(n, &self.g, &mut block)?;
        self.v = block;
        self.state.log(EventKind::Bounce, Some(f), n);
        for &h in self.graph.adjacency(f) {
            self.resimulate(h)?;
        }
        Ok(Some(StepOutcome {
            time: t_f,
            kind: EventKind::Bounce,
            factor: Some(f),
        }))
    }

    fn refresh(&mut self) -> Result<Option<usize>> {
        let graph = self.graph;
        if let RefreshKind::Local = self.scheme.kind {
            let v = self.state.velocities();
            let (w, f, affected) = local_refresh(graph, &v, &mut self.rng);
            let n = graph.neighborhood(f);
            for &k in n {
                self.state.set_velocity(k, w[k]);
            }
            self.state.log(EventKind::Refresh, Some(f), n);
            for &h in affected {
                self.resimulate(h)?;
            }
            return Ok(Some(f));
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
        self.rebuild()?;
        Ok(None)
    }

    /// Runs to the horizon and returns the event lists.
    pub fn run(mut self) -> Result<LocalTrajectory> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    /// Closes the event lists at the current clock (the horizon once
    /// [`step`](Self::step) has returned `None`).
    pub fn finish(self) -> LocalTrajectory {
        let t = if self.done { self.horizon } else { self.state.clock };
        self.state.finish(t)
    }
}

/// Runs the priority-queue local BPS to `horizon`.
pub fn local_bps_queue<R: Rng>(
    graph: &FactorGraph,
    scheme: &RefreshmentScheme,
    initial: &PhaseState,
    horizon: f64,
    options: LocalOptions,
    rng: &mut R,
) -> Result<LocalTrajectory> {
    LocalBpsQueue::new(graph, *scheme, initial, horizon, options, rng)?.run()
}
