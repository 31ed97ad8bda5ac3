//! Without refreshment, the sampler on `U(x) = |x|^2` conserves
//! `|x|^2 - <x, v>^2` (unit speed), so a path started at `(e1, e2)` never
//! enters the unit ball.

use rand::Rng;

use crate::bps::{dot, reflect_in_place, standard_normal};
use crate::error::{Error, Result};
use crate::models::iso_gaussian_bounce_time;
use crate::ppsim::constant_rate;

/// Minimum of `|x + v s|` over `s` in `[0, tau]`, in closed form.
pub fn segment_min_norm(x: &[f64], v: &[f64], tau: f64) -> f64 {
    let v2 = dot(v, v);
    let s = if v2 > 0.0 { (-dot(x, v) / v2).clamp(0.0, tau) } else { 0.0 };
    x.iter().zip(v).map(|(a, b)| (a + b * s).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducibilityReport {
    /// Smallest norm along the continuous path.
    pub min_norm: f64,
    pub bounces: u64,
    pub refreshes: u64,
    pub final_time: f64,
    /// Largest deviation from `<x_i, v_i> = -sqrt(-log V_i)` over bounces
    /// preceded by `<x, v> <= 0` (only meaningful without refreshment).
    pub recursion_error: f64,
    /// Whether `<x, v> <= 0` persisted after the first time it held.
    pub descent_persists: bool,
}

/// Runs the two-dimensional sampler on `U(x) = |x|^2` from `x = e1`,
/// `v = e2` until `bounces` bounces or time `max_time`, whichever comes
/// first, with global Gaussian refreshment at `refresh_rate`.
pub fn reducibility_witness<R: Rng + ?Sized>(
    bounces: u64,
    refresh_rate: f64,
    max_time: f64,
    rng: &mut R,
) -> Result<ReducibilityReport> {
    if !(refresh_rate >= 0.0) || !(max_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need refresh rate >= 0 and max time > 0, got ({refresh_rate}, {max_time})"
        )));
    }
    let mut x = vec![1.0, 0.0];
    let mut v = vec![0.0, 1.0];
    let mut report = ReducibilityReport {
        min_norm: 1.0,
        bounces: 0,
        refreshes: 0,
        final_time: 0.0,
        recursion_error: 0.0,
        descent_persists: true,
    };
    let mut seen_descent = false;
    let mut t = 0.0;
    while report.bounces < bounces && t < max_time {
        let u: f64 = rng.random();
        let u = u.max(f64::MIN_POSITIVE);
        let t_bounce = iso_gaussian_bounce_time(&x, &v, u);
        let t_ref = constant_rate(refresh_rate, f64::INFINITY, rng).time_or_inf();
        let next = t_bounce.min(t_ref);
        let truncated = max_time - t <= next;
        let tau = if truncated { max_time - t } else { next };
        report.min_norm = report.min_norm.min(segment_min_norm(&x, &v, tau));
        let before = dot(&x, &v);
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += vi * tau;
        }
        t += tau;
        if truncated {
            break;
        }
        if t_ref <= t_bounce {
            v = standard_normal(2, rng);
            report.refreshes += 1;
            continue;
        }
        let g: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        reflect_in_place(&g, &mut v)?;
        report.bounces += 1;
        let after = dot(&x, &v);
        if before <= 0.0 && report.refreshes == 0 {
            let predicted = -(-u.ln()).sqrt();
            report.recursion_error = report.recursion_error.max((after - predicted).abs());
        }
        if seen_descent && after > 0.0 && report.refreshes == 0 {
            report.descent_persists = false;
        }
        seen_descent |= after <= 0.0;
    }
    report.final_time = t;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn min_norm_cases() {
        assert_eq!(segment_min_norm(&[1.0, 0.0], &[0.0, 1.0], 5.0), 1.0);
        assert!((segment_min_norm(&[-2.0, 1.0], &[1.0, 0.0], 5.0) - 1.0).abs() < 1e-15);
        assert!((segment_min_norm(&[-2.0, 1.0], &[1.0, 0.0], 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn no_refresh_never_enters_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let r = reducibility_witness(200, 0.0, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(r.bounces, 200);
        assert!(r.min_norm >= 1.0 - 1e-9, "{}", r.min_norm);
        assert!(r.recursion_error < 1e-9, "{}", r.recursion_error);
        assert!(r.descent_persists);
    }
}
