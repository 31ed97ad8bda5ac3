//! The radial lumping `(r, m) = (|x|, <x, v> / |x|)` of the bouncy particle
//! sampler without refreshment on `U(x) = scale |x|^2`, unit speed.
//!
//! Between jumps the pair follows straight-line kinematics; at rate
//! `2 scale r m` (the bounce intensity `<grad U, v>`) the radial velocity
//! flips, `m -> -m`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ppsim::{first_arrival_thinning, Arrival, IntensityEnvelope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub r: f64,
    pub m: f64,
}

impl RadialState {
    pub fn new(r: f64, m: f64) -> Result<Self> {
        if !(r > 0.0) || !(m.abs() <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("radial state needs r > 0, |m| <= 1, got ({r}, {m})")));
        }
        Ok(Self { r, m: m.clamp(-1.0, 1.0) })
    }
}

/// Deterministic motion for time `t`:
/// `r(t) = sqrt(r^2 + 2 m r t + t^2)`, `m(t) = (m r + t) / r(t)`.
pub fn radial_flow(s: RadialState, t: f64) -> Result<RadialState> {
    let r2 = s.r * s.r + 2.0 * s.m * s.r * t + t * t;
    let r = r2.max(0.0).sqrt();
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radial path hit the origin at t = {t}")));
    }
    Ok(RadialState {
        r,
        m: ((s.m * s.r + t) / r).clamp(-1.0, 1.0),
    })
}

/// A simulated radial path: the state after each jump.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTrajectory {
    pub initial: RadialState,
    pub jumps: Vec<(f64, RadialState)>,
    pub horizon: f64,
    pub end: RadialState,
}

impl RadialTrajectory {
    pub fn state_at(&self, t: f64) -> Result<RadialState> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                time: t,
                start: 0.0,
                end: self.horizon,
            });
        }
        let i = self.jumps.partition_point(|(tj, _)| *tj <= t);
        let (t0, s0) = if i == 0 { (0.0, self.initial) } else { self.jumps[i - 1] };
        radial_flow(s0, t - t0)
    }
}

/// Window over which the thinning envelope is held.
const RADIAL_WINDOW: f64 = 1.0;

/// Radial process for `U(x) = |x|^2`.
pub fn radial_simulate<R: Rng + ?Sized>(initial: RadialState, horizon: f64, rng: &mut R) -> Result<RadialTrajectory> {
    radial_simulate_scaled(initial, 1.0, horizon, rng)
}

/// Radial process for `U(x) = scale |x|^2`, jumps by thinning against
/// `2 scale (r(s) + window)`, which dominates `2 scale r m` on the window
/// since `r` grows at most at unit speed.
pub fn radial_simulate_scaled<R: Rng + ?Sized>(
    initial: RadialState,
    scale: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<RadialTrajectory> {
    if !(scale > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("need scale > 0 and horizon >= 0, got ({scale}, {horizon})")));
    }
    let mut jumps = Vec::new();
    let mut t = 0.0;
    let mut state = initial;
    loop {
        let s0 = state;
        // r(s) m(s) = m0 r0 + s
        let intensity = |s: f64| 2.0 * scale * (s0.m * s0.r + s).max(0.0);
        let envelope = |s: f64| -> IntensityEnvelope {
            let r = (s0.r * s0.r + 2.0 * s0.m * s0.r * s + s * s).max(0.0).sqrt();
            IntensityEnvelope::new(2.0 * scale * (r + RADIAL_WINDOW), RADIAL_WINDOW)
        };
        match first_arrival_thinning(intensity, envelope, horizon - t, rng)? {
            Arrival::At(tau) => {
                let s = radial_flow(s0, tau)?;
                state = RadialState { r: s.r, m: -s.m };
                t += tau;
                jumps.push((t, state));
            }
            Arrival::Never => {
                let end = radial_flow(s0, horizon - t)?;
                return Ok(RadialTrajectory {
                    initial,
                    jumps,
                    horizon,
                    end,
                });
            }
        }
    }
}

fn check_k(k: u32) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("invariant family index must be >= 2, got {k}")));
    }
    Ok(())
}

/// Normalised density of the `k`-th invariant law of the radial process,
/// `f_k(r, m) = 2 r^(k-1) e^(-r^2) / Gamma(k/2) * (1 - m^2)^((k-3)/2) / B(1/2, (k-1)/2)`.
///
/// The `r`-marginal is the chi law with `k` degrees of freedom evaluated at
/// `sqrt(2) r`. For `k = 2` the density is infinite at `|m| = 1`.
pub fn invariant_family_density(k: u32, r: f64, m: f64) -> Result<f64> {
    check_k(k)?;
    if !(r >= 0.0) || !(m.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("need r >= 0 and |m| <= 1, got ({r}, {m})")));
    }
    let kf = f64::from(k);
    let a = 0.5 * (kf - 1.0);
    let ln_beta = ln_gamma(0.5) + ln_gamma(a) - ln_gamma(0.5 + a);
    let ln_r = std::f64::consts::LN_2 - ln_gamma(0.5 * kf) + (kf - 1.0) * r.ln() - r * r;
    let one_minus = 1.0 - m * m;
    if k == 2 && one_minus == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ln_m = if k == 3 { 0.0 } else { (a - 1.0) * one_minus.ln() };
    let ln_r = if r == 0.0 && k > 1 { f64::NEG_INFINITY } else { ln_r };
    Ok((ln_r + ln_m - ln_beta).exp())
}

/// Exact draw from `f_k`: `r^2 ~ Gamma(k/2, 1)` and
/// `(1 + m) / 2 ~ Beta((k-1)/2, (k-1)/2)` independently.
pub fn sample_invariant_family<R: Rng + ?Sized>(k: u32, rng: &mut R) -> Result<RadialState> {
    check_k(k)?;
    let kf = f64::from(k);
    let gamma = Gamma::new(0.5 * kf, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let beta = Beta::new(0.5 * (kf - 1.0), 0.5 * (kf - 1.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    loop {
        let r = gamma.sample(rng).sqrt();
        if r > 0.0 {
            let m = 2.0 * beta.sample(rng) - 1.0;
            return Ok(RadialState { r, m });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perpendicular_passage() {
        let s = radial_flow(RadialState::new(2.0, 0.0).unwrap(), 1.5).unwrap();
        assert!((s.r - (4.0f64 + 2.25).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn collinear_motion() {
        let s = radial_flow(RadialState::new(1.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!((s.r, s.m), (2.0, 1.0));
    }

    #[test]
    fn k3_is_uniform_in_m() {
        let a = invariant_family_density(3, 0.8, -0.9).unwrap();
        let b = invariant_family_density(3, 0.8, 0.3).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn k2_radial_shape() {
        // r-marginal proportional to 2 r exp(-r^2)
        let f = |r: f64| invariant_family_density(2, r, 0.2).unwrap();
        let ratio = f(1.3) / f(0.4);
        let expected = (1.3 * f64::exp(-1.69)) / (0.4 * f64::exp(-0.16));
        assert!((ratio - expected).abs() < 1e-12);
        assert_eq!(invariant_family_density(2, 1.0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn invalid_inputs() {
        assert!(invariant_family_density(1, 1.0, 0.0).is_err());
        assert!(RadialState::new(0.0, 0.0).is_err());
        assert!(RadialState::new(1.0, 1.5).is_err());
    }
}
