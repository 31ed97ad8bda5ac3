//! One-dimensional exponential-family posteriors simulated by superposition.
//!
//! `U(x) = scale x^2 - x phi(y) + A(x)` splits into a Gaussian prior term, a
//! linear sufficient-statistic term and the log-normaliser. Each term has a
//! closed-form first arrival; their minimum is a candidate from the summed
//! component intensities, thinned back to the true intensity.

use rand::{Rng, RngCore};

use super::gaussian::quadratic_ray_time;
use crate::bps::{BounceDraw, BounceStrategy, Energy, EnergyModel};
use crate::error::{Error, Result};
use crate::factor_graph::Factor;
use crate::ppsim::{superpose, Arrival, BOUND_TOLERANCE};

/// A univariate exponential family with natural parameter `x`, given by its
/// log-normaliser `A`. `A` must be convex and increasing so that `A^-1`
/// exists.
pub trait ExponentialFamily: Send + Sync {
    fn log_normalizer(&self, x: f64) -> f64;
    fn log_normalizer_derivative(&self, x: f64) -> f64;
    /// `A^-1(a)`, `None` outside the range of `A`.
    fn inverse_log_normalizer(&self, a: f64) -> Option<f64>;
    fn sufficient_statistic(&self, y: f64) -> f64;
}

/// Poisson counts with log-rate `x`: `A(x) = exp(x)`, `phi(y) = y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoissonFamily;

impl ExponentialFamily for PoissonFamily {
    fn log_normalizer(&self, x: f64) -> f64 {
        x.exp()
    }
    fn log_normalizer_derivative(&self, x: f64) -> f64 {
        x.exp()
    }
    fn inverse_log_normalizer(&self, a: f64) -> Option<f64> {
        (a > 0.0).then(|| a.ln())
    }
    fn sufficient_statistic(&self, y: f64) -> f64 {
        y
    }
}

/// First arrivals of the three component processes from uniform draws `u`.
///
/// The prior term is `prior_scale * x^2`; `prior_scale = 0` disables it.
pub fn expfam_bounce_times<F: ExponentialFamily + ?Sized>(
    family: &F,
    x: f64,
    v: f64,
    phi_y: f64,
    prior_scale: f64,
    u: [f64; 3],
) -> [Arrival; 3] {
    let to_arrival = |t: Option<f64>| t.map_or(Arrival::Never, Arrival::At);
    let prior = to_arrival(quadratic_ray_time(
        2.0 * prior_scale * x * v,
        2.0 * prior_scale * v * v,
        -u[0].ln(),
    ));
    let linear = if v * phi_y < 0.0 {
        Arrival::At(u[1].ln() / (v * phi_y))
    } else {
        Arrival::Never
    };
    let normalizer = if v == 0.0 {
        Arrival::Never
    } else {
        match family.inverse_log_normalizer(-u[2].ln() + family.log_normalizer(x)) {
            Some(z) if (z - x) / v > 0.0 => Arrival::At((z - x) / v),
            _ => Arrival::Never,
        }
    };
    [prior, linear, normalizer]
}

/// Posterior of one observation `y` under a Gaussian prior of energy
/// `prior_scale * x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFamilyPosterior<F> {
    pub family: F,
    pub phi_y: f64,
    pub prior_scale: f64,
}

impl<F: ExponentialFamily> ExpFamilyPosterior<F> {
    pub fn new(family: F, y: f64, prior_scale: f64) -> Result<Self> {
        if !(prior_scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("prior scale must be >= 0, got {prior_scale}")));
        }
        let phi_y = family.sufficient_statistic(y);
        Ok(Self {
            family,
            phi_y,
            prior_scale,
        })
    }

    pub fn derivative(&self, x: f64) -> f64 {
        2.0 * self.prior_scale * x - self.phi_y + self.family.log_normalizer_derivative(x)
    }

    fn component_rates(&self, x: f64, v: f64) -> f64 {
        (2.0 * self.prior_scale * x * v).max(0.0)
            + (-self.phi_y * v).max(0.0)
            + (self.family.log_normalizer_derivative(x) * v).max(0.0)
    }

    /// Superposition candidates thinned to the true intensity.
    pub fn first_arrival<R: Rng + ?Sized>(&self, x: f64, v: f64, horizon: f64, rng: &mut R) -> Result<BounceDraw> {
        let mut s = 0.0;
        let mut rejections = 0;
        loop {
            let y = x + v * s;
            let u = [rng.random(), rng.random(), rng.random()];
            let tau = match superpose(expfam_bounce_times(&self.family, y, v, self.phi_y, self.prior_scale, u))
                .arrival
            {
                Arrival::At(t) => t,
                Arrival::Never => return Ok(BounceDraw { arrival: Arrival::Never, rejections }),
            };
            s += tau;
            if s >= horizon {
                return Ok(BounceDraw { arrival: Arrival::Never, rejections });
            }
            let z = x + v * s;
            let rate = (self.derivative(z) * v).max(0.0);
            let bound = self.component_rates(z, v);
            if rate > bound * (1.0 + BOUND_TOLERANCE) {
                return Err(Error::BoundViolation { time: s, intensity: rate, bound });
            }
            if rng.random::<f64>() * bound < rate {
                return Ok(BounceDraw { arrival: Arrival::At(s), rejections });
            }
            rejections += 1;
        }
    }
}

impl<F: ExponentialFamily> Energy for ExpFamilyPosterior<F> {
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.prior_scale * x[0] * x[0] - x[0] * self.phi_y + self.family.log_normalizer(x[0])
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = self.derivative(x[0]);
    }
}

impl<F: ExponentialFamily> EnergyModel for ExpFamilyPosterior<F> {
    fn strategy(&self) -> BounceStrategy {
        BounceStrategy::Superposition
    }

    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw> {
        self.first_arrival(x[0], v[0], horizon, rng)
    }
}

/// An exponential-family term attached to one coordinate of a factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpFamilyFactor<F> {
    coordinate: [usize; 1],
    pub term: ExpFamilyPosterior<F>,
}

impl<F: ExponentialFamily> ExpFamilyFactor<F> {
    pub fn new(coordinate: usize, term: ExpFamilyPosterior<F>) -> Self {
        Self {
            coordinate: [coordinate],
            term,
        }
    }
}

impl<F: ExponentialFamily> Factor for ExpFamilyFactor<F> {
    fn neighborhood(&self) -> &[usize] {
        &self.coordinate
    }
    fn energy(&self, x_f: &[f64]) -> f64 {
        Energy::energy(&self.term, x_f)
    }
    fn gradient(&self, x_f: &[f64], grad: &mut [f64]) {
        Energy::gradient(&self.term, x_f, grad)
    }
    fn first_arrival(&self, x_f: &[f64], v_f: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<Arrival> {
        self.term.first_arrival(x_f[0], v_f[0], horizon, rng).map(|d| d.arrival)
    }
    /// With `A` convex the intensity is non-decreasing along the ray.
    fn bound(&self, x_f: &[f64], v_f: &[f64], delta: f64) -> Option<f64> {
        let v = v_f[0];
        Some((self.term.derivative(x_f[0] + v * delta) * v).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn linear_term_examples() {
        let [_, t2, _] = expfam_bounce_times(&PoissonFamily, 0.0, -1.0, 2.0, 0.5, [0.5, E.powi(-2), 0.5]);
        assert_eq!(t2, Arrival::At(1.0));
        let [_, t2, _] = expfam_bounce_times(&PoissonFamily, 0.0, 1.0, 2.0, 0.5, [0.5, 0.3, 0.5]);
        assert_eq!(t2, Arrival::Never);
    }

    #[test]
    fn poisson_normalizer_example() {
        let [_, _, t3] = expfam_bounce_times(&PoissonFamily, 0.0, 1.0, 0.0, 0.5, [0.5, 0.5, 1.0 / E]);
        assert!((t3.time().unwrap() - LN_2).abs() < 1e-15);
        let [_, _, t3] = expfam_bounce_times(&PoissonFamily, 0.0, -1.0, 0.0, 0.5, [0.5, 0.5, 1.0 / E]);
        assert_eq!(t3, Arrival::Never);
    }

    #[test]
    fn poisson_factor_at_zero_count() {
        let f = ExpFamilyFactor::new(0, ExpFamilyPosterior::new(PoissonFamily, 0.0, 0.0).unwrap());
        for x in [-1.0, 0.0, 0.7] {
            assert!((f.energy(&[x]) - f64::exp(x)).abs() < 1e-15);
            let mut g = [0.0];
            f.gradient(&[x], &mut g);
            assert!((g[0] - f64::exp(x)).abs() < 1e-15);
        }
    }
}
