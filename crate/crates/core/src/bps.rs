//! The global bouncy particle sampler.
//!
//! The state moves on straight lines `x(t) = x + v t`. Bounces happen at the
//! first arrival of a Poisson process with intensity
//! `max(0, <grad U(x + v t), v>)` and reflect the velocity off the level set
//! of the energy; an independent clock of rate `lambda_ref` refreshes the
//! velocity. Trajectories are emitted segment by segment into a
//! [`SegmentSink`], so long runs can be reduced on the fly.

use std::cell::RefCell;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ppsim::{self, Arrival, IntensityEnvelope, ThinningStats, LINE_SEARCH_TOL};

/// Position-velocity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl PhaseState {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Result<Self> {
        if position.len() != velocity.len() {
            return Err(Error::DimensionMismatch {
                expected: position.len(),
                found: velocity.len(),
            });
        }
        if position.iter().chain(&velocity).any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("phase state entries must be finite".into()));
        }
        Ok(Self { position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// What ended a trajectory segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Bounce,
    Refresh,
    /// The segment was truncated at the requested trajectory length.
    Horizon,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Bounce => "bounce",
            EventKind::Refresh => "refresh",
            EventKind::Horizon => "horizon",
        }
    }
}

/// One linear piece of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_time: f64,
    pub duration: f64,
    pub start: PhaseState,
    /// Event at the end of the segment.
    pub end: EventKind,
}

impl Segment {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn position_at(&self, t: f64) -> Vec<f64> {
        let s = t - self.start_time;
        self.start
            .position
            .iter()
            .zip(&self.start.velocity)
            .map(|(x, v)| x + v * s)
            .collect()
    }

    pub fn end_position(&self) -> Vec<f64> {
        self.position_at(self.end_time())
    }
}

/// Receives the segments of a trajectory as they are produced.
pub trait SegmentSink {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind);
}

impl<S: SegmentSink + ?Sized> SegmentSink for &mut S {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        (**self).push(start_time, duration, x, v, end)
    }
}

impl<A: SegmentSink, B: SegmentSink> SegmentSink for (A, B) {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        self.0.push(start_time, duration, x, v, end);
        self.1.push(start_time, duration, x, v, end);
    }
}

impl<S: SegmentSink> SegmentSink for Option<S> {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        if let Some(s) = self {
            s.push(start_time, duration, x, v, end);
        }
    }
}

/// A fully recorded piecewise-linear trajectory on `[0, horizon]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::end_time)
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.start.dim())
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.segments.iter().filter(|s| s.end == kind).count()
    }

    /// Linear interpolation of the position at time `t` in `[0, horizon]`.
    pub fn position_at(&self, t: f64) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        if self.segments.is_empty() || !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfRange {
                time: t,
                start: 0.0,
                end: horizon,
            });
        }
        // last segment starting at or before t
        let i = self.segments.partition_point(|s| s.start_time <= t);
        Ok(self.segments[i.saturating_sub(1)].position_at(t))
    }
}

impl SegmentSink for Trajectory {
    fn push(&mut self, start_time: f64, duration: f64, x: &[f64], v: &[f64], end: EventKind) {
        self.segments.push(Segment {
            start_time,
            duration,
            start: PhaseState {
                position: x.to_vec(),
                velocity: v.to_vec(),
            },
            end,
        });
    }
}

/// How a model simulates its bounce times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BounceStrategy {
    Inversion,
    Convex,
    Thinning,
    Superposition,
}

impl BounceStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            BounceStrategy::Inversion => "inversion",
            BounceStrategy::Convex => "convex",
            BounceStrategy::Thinning => "thinning",
            BounceStrategy::Superposition => "superposition",
        }
    }
}

/// A bounce-time draw and the thinning rejections it took to get there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceDraw {
    pub arrival: Arrival,
    pub rejections: u64,
}

impl From<Arrival> for BounceDraw {
    fn from(arrival: Arrival) -> Self {
        Self {
            arrival,
            rejections: 0,
        }
    }
}

/// Differentiable energy `U = -log(unnormalised target)`.
pub trait Energy {
    fn dim(&self) -> usize;
    fn energy(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
}

/// An energy together with a bounce-time simulator for it.
pub trait EnergyModel: Energy {
    fn strategy(&self) -> BounceStrategy;

    /// First arrival of the bounce process along the ray `(x, v)`, ignoring
    /// arrivals at or beyond `horizon`.
    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw>;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Bounce intensity `max(0, <grad, v>)`.
pub fn intensity_from_gradient(gradient: &[f64], v: &[f64]) -> f64 {
    dot(gradient, v).max(0.0)
}

/// Bounce intensity of `model` at phase state `z`.
pub fn intensity<M: Energy + ?Sized>(model: &M, z: &PhaseState) -> f64 {
    let mut g = vec![0.0; z.dim()];
    model.gradient(&z.position, &mut g);
    intensity_from_gradient(&g, &z.velocity)
}

/// Reflects `v` off the hyperplane orthogonal to `gradient`, in place:
/// `v - 2 <g, v> / |g|^2 g`.
pub fn reflect_in_place(gradient: &[f64], v: &mut [f64]) -> Result<()> {
    let g2 = dot(gradient, gradient);
    if !(g2 > 0.0) {
        return Err(Error::DegenerateBounce);
    }
    let c = 2.0 * dot(gradient, v) / g2;
    for (vi, gi) in v.iter_mut().zip(gradient) {
        *vi -= c * gi;
    }
    Ok(())
}

/// Reflected copy of `v`; see [`reflect_in_place`].
pub fn reflect(gradient: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if gradient.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: gradient.len(),
            found: v.len(),
        });
    }
    let mut out = v.to_vec();
    reflect_in_place(gradient, &mut out)?;
    Ok(out)
}

/// Velocity refreshment law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefreshKind {
    /// Fresh standard normal velocity.
    GlobalGaussian,
    /// Uniform on the unit sphere.
    RestrictedSphere,
    /// Unit vector at angle `2 pi Beta(alpha, beta)` from the current
    /// direction.
    RestrictedPartial { alpha: f64, beta: f64 },
    /// Resample the velocity block of one uniformly chosen factor; only the
    /// factor-graph samplers support it.
    Local,
}

impl RefreshKind {
    pub fn name(&self) -> &'static str {
        match self {
            RefreshKind::GlobalGaussian => "global_gaussian",
            RefreshKind::RestrictedSphere => "restricted_sphere",
            RefreshKind::RestrictedPartial { .. } => "restricted_partial",
            RefreshKind::Local => "local",
        }
    }

    /// Whether velocities stay on the unit sphere.
    pub fn is_restricted(&self) -> bool {
        matches!(self, RefreshKind::RestrictedSphere | RefreshKind::RestrictedPartial { .. })
    }
}

/// Refreshment law plus the rate of its Poisson clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshmentScheme {
    pub kind: RefreshKind,
    pub rate: f64,
}

impl RefreshmentScheme {
    pub fn new(kind: RefreshKind, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("refresh rate must be finite and >= 0, got {rate}")));
        }
        if let RefreshKind::RestrictedPartial { alpha, beta } = kind {
            if !(alpha > 0.0 && beta > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "restricted_partial needs alpha, beta > 0, got ({alpha}, {beta})"
                )));
            }
        }
        Ok(Self { kind, rate })
    }

    pub fn global(rate: f64) -> Self {
        Self {
            kind: RefreshKind::GlobalGaussian,
            rate,
        }
    }

    /// Time to the next refreshment, `+inf` when the rate is zero.
    pub fn next_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        ppsim::constant_rate(self.rate, f64::INFINITY, rng).time_or_inf()
    }

    /// A velocity from the scheme's stationary law.
    pub fn initial_velocity<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        if self.kind.is_restricted() {
            unit_sphere(dim, rng)
        } else {
            standard_normal(dim, rng)
        }
    }

    /// New velocity after a refreshment event.
    pub fn refresh<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self.kind {
            RefreshKind::GlobalGaussian => Ok(standard_normal(v.len(), rng)),
            RefreshKind::RestrictedSphere => Ok(unit_sphere(v.len(), rng)),
            RefreshKind::RestrictedPartial { alpha, beta } => {
                let b = Beta::new(alpha, beta)
                    .map_err(|e| Error::InvalidParameter(format!("beta({alpha}, {beta}): {e}")))?;
                let theta = 2.0 * std::f64::consts::PI * b.sample(rng);
                rotate_by_angle(v, theta, rng)
            }
            RefreshKind::Local => Err(Error::InvalidParameter(
                "local refreshment needs a factor graph sampler".into(),
            )),
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut z = standard_normal(dim, rng);
        let n = norm(&z);
        if n > 0.0 {
            z.iter_mut().for_each(|a| *a /= n);
            return z;
        }
    }
}

/// Unit vector at angle `theta` from `v / |v|`, uniform over the directions
/// with that angle.
pub fn rotate_by_angle<R: Rng + ?Sized>(v: &[f64], theta: f64, rng: &mut R) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) {
        return Err(Error::InvalidParameter("partial refreshment of a zero velocity".into()));
    }
    let u: Vec<f64> = v.iter().map(|a| a / n).collect();
    let (s, c) = theta.sin_cos();
    if u.len() == 1 {
        return Ok(vec![if c >= 0.0 { u[0] } else { -u[0] }]);
    }
    if theta == 0.0 {
        return Ok(u);
    }
    // Random direction orthogonal to u.
    let w = loop {
        let mut w = standard_normal(u.len(), rng);
        let p = dot(&w, &u);
        w.iter_mut().zip(&u).for_each(|(wi, ui)| *wi -= p * ui);
        let wn = norm(&w);
        if wn > 1e-12 {
            w.iter_mut().for_each(|a| *a /= wn);
            break w;
        }
    };
    Ok(u.iter().zip(&w).map(|(ui, wi)| c * ui + s * wi).collect())
}

/// Guards against runaway intensities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunLimits {
    pub max_events: Option<u64>,
    pub wall_clock: Option<Duration>,
}

impl RunLimits {
    pub(crate) fn check(&self, events: u64, started: Instant) -> Result<()> {
        if let Some(cap) = self.max_events {
            if events >= cap {
                return Err(Error::EventCap(cap));
            }
        }
        if let Some(limit) = self.wall_clock {
            // checked sparsely; Instant::now is not free
            if events.is_multiple_of(1024) && started.elapsed() > limit {
                return Err(Error::WallClock);
            }
        }
        Ok(())
    }
}

/// Event tallies of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub bounces: u64,
    pub refreshes: u64,
    /// Thinning candidates that did not bounce.
    pub rejections: u64,
    /// Bound windows that expired without a candidate.
    pub window_renewals: u64,
    /// Gradient evaluations (single-datum gradients for the logistic sampler).
    pub gradient_evaluations: u64,
}

impl RunStats {
    /// Every candidate event: bounces, refreshes and rejections.
    pub fn total_events(&self) -> u64 {
        self.bounces + self.refreshes + self.rejections
    }
}

/// Relative velocity-norm drift tolerated between refreshments.
pub const NORM_DRIFT_TOLERANCE: f64 = 1e-9;

/// Runs the basic sampler up to `horizon`, recording the whole trajectory.
pub fn simulate<M, R>(
    model: &M,
    scheme: &RefreshmentScheme,
    initial: &PhaseState,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory>
where
    M: EnergyModel + ?Sized,
    R: RngCore,
{
    let mut traj = Trajectory::new();
    simulate_into(model, scheme, initial, horizon, RunLimits::default(), rng, &mut traj)?;
    Ok(traj)
}

/// Runs the basic sampler up to `horizon`, streaming segments into `sink`.
///
/// Each iteration races the model's bounce time against an exponential
/// refreshment clock; a tie counts as a refreshment. The final segment is
/// truncated at `horizon` and tagged [`EventKind::Horizon`].
pub fn simulate_into<M, R, S>(
    model: &M,
    scheme: &RefreshmentScheme,
    initial: &PhaseState,
    horizon: f64,
    limits: RunLimits,
    rng: &mut R,
    mut sink: S,
) -> Result<RunStats>
where
    M: EnergyModel + ?Sized,
    R: RngCore,
    S: SegmentSink,
{
    let d = model.dim();
    if initial.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.dim(),
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if matches!(scheme.kind, RefreshKind::Local) {
        return Err(Error::InvalidParameter(
            "local refreshment needs a factor graph sampler".into(),
        ));
    }
    let started = Instant::now();
    let mut x = initial.position.clone();
    let mut v = initial.velocity.clone();
    let mut grad = vec![0.0; d];
    let mut reference_norm = norm(&v);
    let mut stats = RunStats::default();
    let mut t = 0.0;
    let rng: &mut dyn RngCore = rng;

    while t < horizon {
        limits.check(stats.bounces + stats.refreshes, started)?;
        let remaining = horizon - t;
        let draw = model.bounce_time(&x, &v, remaining, rng)?;
        stats.rejections += draw.rejections;
        let t_bounce = draw.arrival.time_or_inf();
        let t_ref = scheme.next_time(rng);
        let (tau, kind) = if t_ref <= t_bounce {
            (t_ref, EventKind::Refresh)
        } else {
            (t_bounce, EventKind::Bounce)
        };
        if tau >= remaining {
            sink.push(t, remaining, &x, &v, EventKind::Horizon);
            break;
        }
        sink.push(t, tau, &x, &v, kind);
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += vi * tau;
        }
        t += tau;
        match kind {
            EventKind::Bounce => {
                model.gradient(&x, &mut grad);
                stats.gradient_evaluations += 1;
                reflect_in_place(&grad, &mut v)?;
                let n = norm(&v);
                if (n - reference_norm).abs() > NORM_DRIFT_TOLERANCE * reference_norm.max(f64::MIN_POSITIVE) {
                    return Err(Error::NormDrift {
                        expected: reference_norm,
                        found: n,
                    });
                }
                stats.bounces += 1;
            }
            EventKind::Refresh => {
                v = scheme.refresh(&v, rng)?;
                reference_norm = norm(&v);
                stats.refreshes += 1;
            }
            EventKind::Horizon => unreachable!(),
        }
    }
    Ok(stats)
}

/// Bounce times by convex line search on the energy along the ray.
#[derive(Debug, Clone)]
pub struct ConvexLineSearch<M> {
    pub model: M,
    pub tol: f64,
}

impl<M: Energy> ConvexLineSearch<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            tol: LINE_SEARCH_TOL,
        }
    }
}

impl<M: Energy> Energy for ConvexLineSearch<M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.model.energy(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.model.gradient(x, grad)
    }
}

impl<M: Energy> EnergyModel for ConvexLineSearch<M> {
    fn strategy(&self) -> BounceStrategy {
        BounceStrategy::Convex
    }

    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw> {
        let y = RefCell::new(vec![0.0; x.len()]);
        let energy = |t: f64| {
            let mut y = y.borrow_mut();
            y.iter_mut().zip(x.iter().zip(v)).for_each(|(yi, (xi, vi))| *yi = xi + vi * t);
            self.model.energy(&y)
        };
        let e = ppsim::exp_draw(rng);
        let arrival = ppsim::first_arrival_convex(energy, e, self.tol, horizon)?;
        Ok(arrival.into())
    }
}

/// Provides a constant intensity bound for thinning along a ray: given the
/// ray `(x, v)` and an offset `s`, returns an envelope valid on
/// `[s, s + validity)`.
pub trait EnvelopeProvider {
    fn envelope(&self, x: &[f64], v: &[f64], s: f64) -> IntensityEnvelope;
}

impl<F: Fn(&[f64], &[f64], f64) -> IntensityEnvelope> EnvelopeProvider for F {
    fn envelope(&self, x: &[f64], v: &[f64], s: f64) -> IntensityEnvelope {
        self(x, v, s)
    }
}

/// Bounce times by adaptive thinning against a user-supplied envelope.
#[derive(Debug, Clone)]
pub struct Thinned<M, E> {
    pub model: M,
    pub envelope: E,
}

impl<M: Energy, E: EnvelopeProvider> Energy for Thinned<M, E> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.model.energy(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.model.gradient(x, grad)
    }
}

impl<M: Energy, E: EnvelopeProvider> EnergyModel for Thinned<M, E> {
    fn strategy(&self) -> BounceStrategy {
        BounceStrategy::Thinning
    }

    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw> {
        let mut y = vec![0.0; x.len()];
        let mut g = vec![0.0; x.len()];
        let chi = |t: f64| {
            y.iter_mut().zip(x.iter().zip(v)).for_each(|(yi, (xi, vi))| *yi = xi + vi * t);
            self.model.gradient(&y, &mut g);
            intensity_from_gradient(&g, v)
        };
        let env = |s: f64| self.envelope.envelope(x, v, s);
        let (arrival, ThinningStats { rejections, .. }) =
            ppsim::first_arrival_thinning_with_stats(chi, env, horizon, rng)?;
        Ok(BounceDraw { arrival, rejections })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Flat(usize);

    impl Energy for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn energy(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], g: &mut [f64]) {
            g.fill(0.0)
        }
    }

    impl EnergyModel for Flat {
        fn strategy(&self) -> BounceStrategy {
            BounceStrategy::Inversion
        }
        fn bounce_time(&self, _: &[f64], _: &[f64], _: f64, _: &mut dyn RngCore) -> Result<BounceDraw> {
            Ok(Arrival::Never.into())
        }
    }

    #[test]
    fn intensity_examples() {
        let g = [2.0, 0.0];
        assert_eq!(intensity_from_gradient(&g, &[0.0, 3.0]), 0.0);
        assert_eq!(intensity_from_gradient(&g, &[-1.0, 5.0]), 0.0);
        assert_eq!(intensity_from_gradient(&g, &[3.0, 1.0]), 6.0);
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(reflect(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert_eq!(reflect(&[2.0, 0.0], &[-1.0, 3.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn reflect_zero_gradient_is_degenerate() {
        assert_eq!(reflect(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::DegenerateBounce));
    }

    #[test]
    fn sphere_refresh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scheme = RefreshmentScheme::new(RefreshKind::RestrictedSphere, 1.0).unwrap();
        let d = 3;
        let mut mean = vec![0.0; d];
        let n = 10_000;
        for _ in 0..n {
            let w = scheme.refresh(&[1.0, 0.0, 0.0], &mut rng).unwrap();
            assert!((norm(&w) - 1.0).abs() < 1e-12);
            mean.iter_mut().zip(&w).for_each(|(m, a)| *m += a / n as f64);
        }
        assert!(mean.iter().all(|m| m.abs() < 0.05), "{mean:?}");
    }

    #[test]
    fn gaussian_refresh_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scheme = RefreshmentScheme::global(1.0);
        let n = 10_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| scheme.refresh(&[0.0; 2], &mut rng).unwrap()).collect();
        for k in 0..2 {
            let col: Vec<f64> = draws.iter().map(|w| w[k]).collect();
            let (_, var) = crate::stats::mean_variance(&col);
            // standard error of the sample variance of N(0,1) is sqrt(2/(n-1))
            let se = (2.0 / (n as f64 - 1.0)).sqrt();
            assert!((var - 1.0).abs() < 3.0 * se, "var {var}");
        }
    }

    #[test]
    fn partial_refresh_zero_angle_keeps_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = rotate_by_angle(&[3.0, 4.0], 0.0, &mut rng).unwrap();
        assert_eq!(w, vec![0.6, 0.8]);
    }

    #[test]
    fn partial_refresh_angle_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let v = [1.0, 2.0, -1.0, 0.5];
        let u: Vec<f64> = v.iter().map(|a| a / norm(&v)).collect();
        for &theta in &[0.3, 1.0, 2.5, 4.0] {
            let w = rotate_by_angle(&v, theta, &mut rng).unwrap();
            assert!((norm(&w) - 1.0).abs() < 1e-12);
            assert!((dot(&u, &w) - f64::cos(theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_refresh_rejects_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let scheme = RefreshmentScheme::new(RefreshKind::RestrictedPartial { alpha: 1.0, beta: 4.0 }, 1.0).unwrap();
        assert!(scheme.refresh(&[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn flat_energy_only_refreshes() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let scheme = RefreshmentScheme::global(1.0);
        let init = PhaseState::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let traj = simulate(&Flat(2), &scheme, &init, 10.0, &mut rng).unwrap();
        assert_eq!(traj.count(EventKind::Bounce), 0);
        assert!((traj.horizon() - 10.0).abs() < 1e-12);
        assert_eq!(traj.segments.last().unwrap().end, EventKind::Horizon);
    }

    #[test]
    fn position_at_single_segment() {
        let mut traj = Trajectory::new();
        traj.push(0.0, 1.0, &[0.0, 0.0], &[1.0, 2.0], EventKind::Horizon);
        assert_eq!(traj.position_at(0.5).unwrap(), vec![0.5, 1.0]);
        assert_eq!(traj.position_at(0.0).unwrap(), vec![0.0, 0.0]);
        assert!(traj.position_at(1.5).is_err());
        assert!(traj.position_at(-0.1).is_err());
    }

    #[test]
    fn position_at_after_bounce() {
        let mut traj = Trajectory::new();
        traj.push(0.0, 1.0, &[0.0], &[1.0], EventKind::Bounce);
        traj.push(1.0, 1.0, &[1.0], &[-1.0], EventKind::Horizon);
        assert_eq!(traj.position_at(1.5).unwrap(), vec![0.5]);
        assert_eq!(traj.position_at(1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn phase_state_validation() {
        assert!(PhaseState::new(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
    }
}
