//! First-arrival simulation for one-dimensional inhomogeneous Poisson
//! processes.
//!
//! Every bounce-time computation in the samplers reduces to drawing the first
//! arrival of a process with intensity `chi(t) = lambda(x + v t, v)` along the
//! current ray. This module provides the four engines used throughout the
//! crate: inversion of the integrated intensity, line search for convex
//! energies, adaptive thinning against local-in-time envelopes, and
//! superposition of independent components.
//!
//! All engines take an explicit horizon. An arrival at or beyond it is
//! reported as [`Arrival::Never`], which lets callers race bounce clocks
//! against refreshment clocks without simulating past the point of interest.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Relative slack tolerated when checking that a bound dominates an intensity.
/// Ratios in `(1, 1 + BOUND_TOLERANCE]` come from round-off and are accepted
/// as certain events; anything above is reported as a violation.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Outcome of a first-arrival simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    /// The process fires at this (strictly positive) time.
    At(f64),
    /// No arrival before the horizon.
    Never,
}

impl Arrival {
    pub fn time(self) -> Option<f64> {
        match self {
            Arrival::At(t) => Some(t),
            Arrival::Never => None,
        }
    }

    /// Arrival time, with `Never` mapped to `+inf`.
    pub fn time_or_inf(self) -> f64 {
        self.time().unwrap_or(f64::INFINITY)
    }

    pub fn is_never(self) -> bool {
        matches!(self, Arrival::Never)
    }

    /// Builds an arrival from a raw time, discarding non-finite times and
    /// times at or past `horizon`.
    pub fn before(time: f64, horizon: f64) -> Self {
        if time.is_finite() && time < horizon {
            Arrival::At(time)
        } else {
            Arrival::Never
        }
    }
}

/// Constant upper bound on an intensity, valid on `[s, s + validity)` for the
/// window start `s` it was requested for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityEnvelope {
    pub bound: f64,
    pub validity: f64,
}

impl IntensityEnvelope {
    pub fn new(bound: f64, validity: f64) -> Self {
        Self { bound, validity }
    }

    /// A bound valid for all future times.
    pub fn global(bound: f64) -> Self {
        Self {
            bound,
            validity: f64::INFINITY,
        }
    }
}

/// Superposition result: the earliest arrival and the component that fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalResult {
    pub arrival: Arrival,
    /// Index of the component that produced `arrival`; `None` when no
    /// component fired.
    pub source: Option<usize>,
}

/// Draws `-log V` with `V` uniform on (0, 1).
pub fn exp_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// First arrival of a homogeneous process with the given rate.
pub fn constant_rate<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Arrival {
    if rate <= 0.0 {
        return Arrival::Never;
    }
    Arrival::before(exp_draw(rng) / rate, horizon)
}

/// First arrival by inversion of the integrated intensity `Xi`.
///
/// `quantile(p)` must return `inf { t : Xi(t) >= p }`, or `None` when `Xi`
/// never reaches `p` (the intensity has finite total mass below `p`).
pub fn first_arrival_inversion(
    quantile: impl FnOnce(f64) -> Option<f64>,
    exp_draw: f64,
    horizon: f64,
) -> Arrival {
    match quantile(exp_draw) {
        Some(t) => Arrival::before(t, horizon),
        None => Arrival::Never,
    }
}

/// Iteration limits for [`first_arrival_convex`].
pub const LINE_SEARCH_MAX_ITER: usize = 200;
/// Default energy tolerance for [`first_arrival_convex`].
pub const LINE_SEARCH_TOL: f64 = 1e-10;

/// Locates `argmin_{t >= 0} energy(t)` for a strictly convex function of `t`.
pub fn ray_minimizer(energy: &impl Fn(f64) -> f64, horizon: f64) -> Result<f64> {
    let e0 = energy(0.0);
    // Doubling: for a convex function, once energy(hi) >= energy(hi / 2) the
    // minimiser lies in [0, hi].
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut e_prev = e0;
    let mut iterations = 0;
    loop {
        let e_hi = energy(hi);
        if e_hi >= e_prev || hi >= horizon {
            break;
        }
        lo = 0.5 * hi;
        e_prev = e_hi;
        hi *= 2.0;
        iterations += 1;
        if iterations > LINE_SEARCH_MAX_ITER {
            return Err(Error::LineSearch { iterations });
        }
    }
    let hi = hi.min(horizon);
    if hi <= 0.0 {
        return Ok(0.0);
    }
    // Golden-section search on [lo, hi].
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (energy(c), energy(d));
    for _ in 0..LINE_SEARCH_MAX_ITER {
        if b - a <= 1e-13 * (1.0 + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = energy(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = energy(d);
        }
    }
    // Compare the interior estimate with the left boundary, where the
    // minimum sits whenever the energy increases from the start.
    let mid = 0.5 * (a + b);
    if lo == 0.0 && e0 <= energy(mid) {
        Ok(0.0)
    } else {
        Ok(mid)
    }
}

/// First arrival for a strictly convex energy along the ray, solving
/// `energy(tau) - energy(tau_star) = exp_draw` with `tau >= tau_star`.
///
/// `energy(t)` is `U(x + v t)`. The root is bracketed by doubling from the
/// minimiser and then bisected to machine precision; the energy residual
/// must end below `tol` (relative to the energy scale), otherwise the energy
/// is reported as mis-specified.
pub fn first_arrival_convex(
    energy: impl Fn(f64) -> f64,
    exp_draw: f64,
    tol: f64,
    horizon: f64,
) -> Result<Arrival> {
    let tau_star = ray_minimizer(&energy, horizon)?;
    if tau_star >= horizon {
        return Ok(Arrival::Never);
    }
    let e_star = energy(tau_star);
    if exp_draw <= 0.0 {
        return Ok(if tau_star > 0.0 {
            Arrival::At(tau_star)
        } else {
            Arrival::Never
        });
    }
    let increment = |t: f64| energy(t) - e_star;

    let mut lo = tau_star;
    let mut step = 1.0;
    let mut hi;
    let mut prev_increment = 0.0;
    let mut iterations = 0;
    loop {
        hi = tau_star + step;
        if hi >= horizon {
            if increment(horizon) < exp_draw {
                return Ok(Arrival::Never);
            }
            hi = horizon;
            break;
        }
        let inc = increment(hi);
        if inc >= exp_draw {
            break;
        }
        iterations += 1;
        if iterations > LINE_SEARCH_MAX_ITER {
            // A plateau means the energy can never climb by `exp_draw`.
            if inc - prev_increment <= tol {
                return Ok(Arrival::Never);
            }
            return Err(Error::LineSearch { iterations });
        }
        prev_increment = inc;
        lo = hi;
        step *= 2.0;
    }

    for _ in 0..LINE_SEARCH_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if increment(mid) >= exp_draw {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let residual = (increment(hi) - exp_draw).abs();
    let scale = 1.0 + e_star.abs() + exp_draw;
    if residual > tol * scale {
        return Err(Error::LineSearch {
            iterations: LINE_SEARCH_MAX_ITER,
        });
    }
    Ok(Arrival::before(hi, horizon))
}

/// Counters collected by the thinning engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThinningStats {
    /// Candidates submitted to the acceptance test.
    pub candidates: u64,
    pub rejections: u64,
    /// Envelope windows that expired without a candidate.
    pub window_advances: u64,
}

/// First arrival by adaptive thinning.
///
/// `envelope(s)` returns a constant bound valid on `[s, s + validity)`. A
/// candidate landing exactly on `s + validity` advances the window without an
/// acceptance test.
pub fn first_arrival_thinning<R: Rng + ?Sized>(
    intensity: impl FnMut(f64) -> f64,
    envelope: impl FnMut(f64) -> IntensityEnvelope,
    horizon: f64,
    rng: &mut R,
) -> Result<Arrival> {
    first_arrival_thinning_with_stats(intensity, envelope, horizon, rng).map(|(a, _)| a)
}

/// [`first_arrival_thinning`] that also reports candidate/rejection counts.
pub fn first_arrival_thinning_with_stats<R: Rng + ?Sized>(
    mut intensity: impl FnMut(f64) -> f64,
    mut envelope: impl FnMut(f64) -> IntensityEnvelope,
    horizon: f64,
    rng: &mut R,
) -> Result<(Arrival, ThinningStats)> {
    let mut stats = ThinningStats::default();
    let mut s = 0.0;
    loop {
        if s >= horizon {
            return Ok((Arrival::Never, stats));
        }
        let env = envelope(s);
        if !(env.bound >= 0.0) || !(env.validity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope must have a non-negative bound and positive validity, got {env:?}"
            )));
        }
        let window_end = s + env.validity;
        let candidate = if env.bound > 0.0 {
            s + exp_draw(rng) / env.bound
        } else {
            window_end
        };
        if !candidate.is_finite() {
            return Ok((Arrival::Never, stats));
        }
        if window_end <= candidate {
            stats.window_advances += 1;
            s = window_end;
            continue;
        }
        if candidate >= horizon {
            return Ok((Arrival::Never, stats));
        }
        let rate = intensity(candidate);
        if rate > env.bound * (1.0 + BOUND_TOLERANCE) {
            return Err(Error::BoundViolation {
                time: candidate,
                intensity: rate,
                bound: env.bound,
            });
        }
        stats.candidates += 1;
        let u: f64 = rng.random();
        if u * env.bound < rate {
            return Ok((Arrival::At(candidate), stats));
        }
        stats.rejections += 1;
        s = candidate;
    }
}

/// Minimum of independent component arrivals together with the index of the
/// component that produced it. Ties go to the lowest index.
pub fn superpose(arrivals: impl IntoIterator<Item = Arrival>) -> ArrivalResult {
    let mut best = ArrivalResult {
        arrival: Arrival::Never,
        source: None,
    };
    for (j, a) in arrivals.into_iter().enumerate() {
        if let Arrival::At(t) = a {
            if best.arrival.time().is_none_or(|b| t < b) {
                best = ArrivalResult {
                    arrival: a,
                    source: Some(j),
                };
            }
        }
    }
    best
}

/// A first-arrival sampler over a shared random stream.
pub type ArrivalSampler<'a, R> = dyn FnMut(&mut R) -> Result<Arrival> + 'a;

/// Runs every component sampler and superposes their arrivals.
pub fn first_arrival_superposition<R: Rng + ?Sized>(
    components: &mut [&mut ArrivalSampler<'_, R>],
    rng: &mut R,
) -> Result<ArrivalResult> {
    if components.is_empty() {
        return Err(Error::InvalidParameter(
            "superposition needs at least one component".into(),
        ));
    }
    let mut arrivals = Vec::with_capacity(components.len());
    for c in components.iter_mut() {
        arrivals.push(c(rng)?);
    }
    Ok(superpose(arrivals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn inversion_constant_rate() {
        let a = first_arrival_inversion(|p| Some(p / 2.0), 1.0, f64::INFINITY);
        assert_eq!(a, Arrival::At(0.5));
    }

    #[test]
    fn inversion_linear_rate() {
        // Xi(t) = t^2 / 2
        let a = first_arrival_inversion(|p| Some((2.0 * p).sqrt()), 2.0, f64::INFINITY);
        assert_eq!(a, Arrival::At(2.0));
    }

    #[test]
    fn inversion_exhausted_mass() {
        // Xi bounded by 1
        let quantile = |p: f64| if p < 1.0 { Some(-(1.0 - p).ln()) } else { None };
        assert_eq!(first_arrival_inversion(quantile, 3.0, f64::INFINITY), Arrival::Never);
    }

    #[test]
    fn inversion_respects_horizon() {
        assert_eq!(first_arrival_inversion(Some, 3.0, 2.0), Arrival::Never);
    }

    #[test]
    fn convex_climbing_ray() {
        // (1 + t)^2, exp_draw 1 -> 2t + t^2 = 1
        let a = first_arrival_convex(|t| (1.0 + t).powi(2), 1.0, 1e-10, f64::INFINITY).unwrap();
        assert!((a.time().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn convex_descending_then_climbing() {
        let e = |t: f64| (t - 1.0).powi(2);
        assert!((ray_minimizer(&e, f64::INFINITY).unwrap() - 1.0).abs() < 1e-7);
        let a = first_arrival_convex(e, 1.0, 1e-10, f64::INFINITY).unwrap();
        assert!((a.time().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convex_zero_budget_returns_minimiser() {
        let a = first_arrival_convex(|t| (t - 1.0).powi(2), 0.0, 1e-10, f64::INFINITY).unwrap();
        assert!((a.time().unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn convex_ever_decreasing_energy_never_fires() {
        // strictly convex and decreasing: the minimiser runs past the horizon
        let a = first_arrival_convex(|t: f64| (-t).exp(), 0.5, 1e-10, 1e6).unwrap();
        assert_eq!(a, Arrival::Never);
    }

    #[test]
    fn convex_respects_horizon() {
        let a = first_arrival_convex(|t| (1.0 + t).powi(2), 1.0, 1e-10, 0.1).unwrap();
        assert_eq!(a, Arrival::Never);
    }

    #[test]
    fn thinning_tight_bound_accepts_first_candidate() {
        let mut r1 = rng(3);
        let mut r2 = rng(3);
        let (a, stats) =
            first_arrival_thinning_with_stats(|_| 2.0, |_| IntensityEnvelope::global(2.0), f64::INFINITY, &mut r1)
                .unwrap();
        assert_eq!(stats.rejections, 0);
        assert_eq!(stats.candidates, 1);
        let expected = exp_draw(&mut r2) / 2.0;
        assert_eq!(a, Arrival::At(expected));
    }

    #[test]
    fn thinning_zero_intensity_never_fires_before_horizon() {
        let mut r = rng(4);
        let (a, stats) =
            first_arrival_thinning_with_stats(|_| 0.0, |_| IntensityEnvelope::global(1.0), 50.0, &mut r).unwrap();
        assert_eq!(a, Arrival::Never);
        assert_eq!(stats.candidates, stats.rejections);
        assert!(stats.candidates > 10);
    }

    #[test]
    fn thinning_reports_envelope_violation() {
        let mut r = rng(5);
        let err = first_arrival_thinning(|_| 3.0, |_| IntensityEnvelope::global(1.0), f64::INFINITY, &mut r)
            .unwrap_err();
        assert!(matches!(err, Error::BoundViolation { .. }));
    }

    #[test]
    fn thinning_zero_bound_windows_advance() {
        // intensity zero before t = 1, then 1; envelope zero on [s, 1)
        let mut r = rng(6);
        let env = |s: f64| {
            if s < 1.0 {
                IntensityEnvelope::new(0.0, 1.0 - s)
            } else {
                IntensityEnvelope::global(1.0)
            }
        };
        let chi = |t: f64| if t < 1.0 { 0.0 } else { 1.0 };
        let (a, stats) = first_arrival_thinning_with_stats(chi, env, f64::INFINITY, &mut r).unwrap();
        assert!(a.time().unwrap() > 1.0);
        assert_eq!(stats.window_advances, 1);
    }

    #[test]
    fn thinning_matches_exponential_law() {
        let mut r = rng(7);
        let n = 10_000;
        let thinned: Vec<f64> = (0..n)
            .map(|_| {
                first_arrival_thinning(|_| 1.0, |_| IntensityEnvelope::global(2.0), f64::INFINITY, &mut r)
                    .unwrap()
                    .time()
                    .unwrap()
            })
            .collect();
        let direct: Vec<f64> = (0..n).map(|_| exp_draw(&mut r)).collect();
        assert!(ks_two_sample(&thinned, &direct, 0.01).passes());
    }

    #[test]
    fn superposition_picks_minimum() {
        let res = superpose([Arrival::At(1.2), Arrival::At(0.7), Arrival::At(3.0)]);
        assert_eq!(res.arrival, Arrival::At(0.7));
        assert_eq!(res.source, Some(1));
    }

    #[test]
    fn superposition_single_component_is_identity() {
        let res = superpose([Arrival::At(0.3)]);
        assert_eq!(res.arrival, Arrival::At(0.3));
        assert_eq!(res.source, Some(0));
        let res = superpose([Arrival::Never]);
        assert_eq!(res, ArrivalResult { arrival: Arrival::Never, source: None });
    }

    #[test]
    fn superposition_of_rates_matches_sum_rate() {
        let mut r = rng(8);
        let n = 10_000;
        let mut c1 = |rng: &mut ChaCha8Rng| Ok(constant_rate(1.0, f64::INFINITY, rng));
        let mut c2 = |rng: &mut ChaCha8Rng| Ok(constant_rate(2.0, f64::INFINITY, rng));
        let mut sup = Vec::with_capacity(n);
        for _ in 0..n {
            let res = first_arrival_superposition(&mut [&mut c1, &mut c2], &mut r).unwrap();
            sup.push(res.arrival.time().unwrap());
        }
        let direct: Vec<f64> = (0..n).map(|_| exp_draw(&mut r) / 3.0).collect();
        assert!(ks_two_sample(&sup, &direct, 0.01).passes());
    }

    #[test]
    fn empty_superposition_is_an_error() {
        let mut r = rng(9);
        let mut comps: [&mut ArrivalSampler<'_, ChaCha8Rng>; 0] = [];
        assert!(first_arrival_superposition(&mut comps, &mut r).is_err());
    }
}
