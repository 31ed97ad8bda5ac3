//! Gaussian energies with closed-form bounce times.

use rand::RngCore;

use crate::bps::{dot, BounceDraw, BounceStrategy, Energy, EnergyModel};
use crate::error::{Error, Result};
use crate::factor_graph::Factor;
use crate::ppsim::{exp_draw, Arrival};

/// Time at which a quadratic energy `U(t) = U(0) + a t + b t^2 / 2`, `b >= 0`,
/// has climbed `e` above its minimum over `[0, t]`. `None` if it never
/// does.
pub fn quadratic_ray_time(a: f64, b: f64, e: f64) -> Option<f64> {
    if a > 0.0 {
        // stable form of (-a + sqrt(a^2 + 2be)) / b
        Some(2.0 * e / (a + (a * a + 2.0 * b * e).sqrt()))
    } else if b > 0.0 {
        Some(-a / b + (2.0 * e / b).sqrt())
    } else {
        None
    }
}

/// Bounce time for `U(x) = |x|^2` from a uniform draw `u` in (0, 1):
/// `(-<x,v> + sqrt(max(<x,v>, 0)^2 - |v|^2 log u)) / |v|^2`.
pub fn iso_gaussian_bounce_time(x: &[f64], v: &[f64], u: f64) -> f64 {
    let xv = dot(x, v);
    let v2 = dot(v, v);
    let climb = if xv <= 0.0 { 0.0 } else { xv * xv };
    (-xv + (climb - v2 * u.ln()).sqrt()) / v2
}

/// `U(x) = scale * |x|^2`, a centred Gaussian with per-coordinate variance
/// `1 / (2 scale)`. `scale = 1` is the convention of the reducibility
/// example; `scale = 1/2` is the standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicGaussian {
    pub dim: usize,
    pub scale: f64,
}

impl IsotropicGaussian {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "isotropic Gaussian needs dim >= 1 and scale > 0, got ({dim}, {scale})"
            )));
        }
        Ok(Self { dim, scale })
    }

    pub fn variance(&self) -> f64 {
        0.5 / self.scale
    }

    /// Closed-form bounce time for exponential budget `e = -log V`.
    pub fn bounce_time_from_budget(&self, x: &[f64], v: &[f64], e: f64) -> Option<f64> {
        let a = 2.0 * self.scale * dot(x, v);
        let b = 2.0 * self.scale * dot(v, v);
        quadratic_ray_time(a, b, e)
    }
}

impl Energy for IsotropicGaussian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, x: &[f64]) -> f64 {
        self.scale * dot(x, x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = 2.0 * self.scale * xi;
        }
    }
}

impl EnergyModel for IsotropicGaussian {
    fn strategy(&self) -> BounceStrategy {
        BounceStrategy::Inversion
    }

    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw> {
        let e = exp_draw(rng);
        let arrival = self
            .bounce_time_from_budget(x, v, e)
            .map_or(Arrival::Never, |t| Arrival::before(t, horizon));
        Ok(arrival.into())
    }
}

/// Symmetric sparse matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    /// Builds from `(i, j, value)` triplets; duplicates are summed and each
    /// off-diagonal triplet is mirrored.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        let mut add = |i: usize, j: usize, a: f64| match rows[i].iter_mut().find(|(c, _)| *c == j) {
            Some((_, v)) => *v += a,
            None => rows[i].push((j, a)),
        };
        for (i, j, a) in triplets {
            add(i, j, a);
            if i != j {
                add(j, i, a);
            }
        }
        for r in &mut rows {
            r.sort_by_key(|(c, _)| *c);
        }
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|(j, a)| a * x[*j]).sum();
        }
    }

    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(x)
            .map(|(row, xi)| xi * row.iter().map(|(j, a)| a * y[*j]).sum::<f64>())
            .sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                m[(i, j)] = a;
            }
        }
        m
    }
}

/// Centred Gaussian `U(x) = x^T P x / 2` with sparse precision `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGaussian {
    precision: SparseSymmetric,
}

impl SparseGaussian {
    /// Rejects precisions that are not positive definite.
    pub fn new(precision: SparseSymmetric) -> Result<Self> {
        nalgebra::Cholesky::new(precision.to_dense()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { precision })
    }

    pub fn precision(&self) -> &SparseSymmetric {
        &self.precision
    }

    /// Diagonal of the covariance `P^-1`.
    pub fn marginal_variances(&self) -> Vec<f64> {
        marginal_variances(&self.precision.to_dense()).expect("checked at construction")
    }
}

/// Diagonal of the inverse of a positive definite matrix.
pub fn marginal_variances(precision: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
    let inv = nalgebra::Cholesky::new(precision.clone())
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    Ok(inv.diagonal().iter().copied().collect())
}

impl Energy for SparseGaussian {
    fn dim(&self) -> usize {
        self.precision.dim()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        0.5 * self.precision.quadratic_form(x, x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.precision.mul_vec(x, grad)
    }
}

impl EnergyModel for SparseGaussian {
    fn strategy(&self) -> BounceStrategy {
        BounceStrategy::Inversion
    }

    fn bounce_time(&self, x: &[f64], v: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<BounceDraw> {
        let a = self.precision.quadratic_form(x, v);
        let b = self.precision.quadratic_form(v, v);
        let e = exp_draw(rng);
        Ok(quadratic_ray_time(a, b, e)
            .map_or(Arrival::Never, |t| Arrival::before(t, horizon))
            .into())
    }
}

/// Factor `U_f(x_f) = x_f^T A x_f / 2 + <c, x_f>` with a small dense
/// positive semi-definite `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    neighborhood: Vec<usize>,
    /// Row-major `n x n`.
    a: Vec<f64>,
    linear: Vec<f64>,
}

impl GaussianFactor {
    pub fn new(neighborhood: Vec<usize>, a: Vec<f64>, linear: Vec<f64>) -> Result<Self> {
        let n = neighborhood.len();
        if a.len() != n * n || linear.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: a.len(),
            });
        }
        Ok(Self { neighborhood, a, linear })
    }

    /// `(x_i^2 - 2 rho x_i x_j + x_j^2) / 2`.
    pub fn pair(i: usize, j: usize, rho: f64) -> Self {
        Self {
            neighborhood: vec![i, j],
            a: vec![1.0, -rho, -rho, 1.0],
            linear: vec![0.0; 2],
        }
    }

    /// `scale * |x_f|^2`.
    pub fn isotropic(neighborhood: Vec<usize>, scale: f64) -> Self {
        let n = neighborhood.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0 * scale;
        }
        Self {
            neighborhood,
            a,
            linear: vec![0.0; n],
        }
    }

    /// `<c, x_f>`: constant gradient `c`.
    pub fn linear(neighborhood: Vec<usize>, c: Vec<f64>) -> Self {
        let n = neighborhood.len();
        Self {
            neighborhood,
            a: vec![0.0; n * n],
            linear: c,
        }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.a[i * n + j] * x[j]).sum();
        }
    }

    /// Slope and curvature `(a, b)` of the energy along the ray.
    fn ray(&self, x: &[f64], v: &[f64]) -> (f64, f64) {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        let mut av = vec![0.0; x.len()];
        self.mul(v, &mut av);
        (dot(&g, v), dot(&av, v))
    }
}

impl Factor for GaussianFactor {
    fn neighborhood(&self) -> &[usize] {
        &self.neighborhood
    }

    fn energy(&self, x_f: &[f64]) -> f64 {
        let mut ax = vec![0.0; x_f.len()];
        self.mul(x_f, &mut ax);
        0.5 * dot(&ax, x_f) + dot(&self.linear, x_f)
    }

    fn gradient(&self, x_f: &[f64], grad: &mut [f64]) {
        self.mul(x_f, grad);
        for (g, c) in grad.iter_mut().zip(&self.linear) {
            *g += c;
        }
    }

    fn first_arrival(&self, x_f: &[f64], v_f: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<Arrival> {
        let (a, b) = self.ray(x_f, v_f);
        let e = exp_draw(rng);
        Ok(quadratic_ray_time(a, b, e).map_or(Arrival::Never, |t| Arrival::before(t, horizon)))
    }

    /// The intensity `max(0, a + b t)` is non-decreasing, so its value at
    /// the end of the window bounds it.
    fn bound(&self, x_f: &[f64], v_f: &[f64], delta: f64) -> Option<f64> {
        let (a, b) = self.ray(x_f, v_f);
        Some((a + b * delta).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn eq4_examples() {
        let t = iso_gaussian_bounce_time(&[1.0, 0.0], &[1.0, 0.0], 1.0 / E);
        assert!((t - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        let t = iso_gaussian_bounce_time(&[-1.0, 0.0], &[1.0, 0.0], 1.0 / E);
        assert!((t - 2.0).abs() < 1e-14);
        let t = iso_gaussian_bounce_time(&[-1.5, 0.3], &[2.0, 0.5], 1.0);
        assert!((t - (3.0 - 0.15) / 4.25).abs() < 1e-14);
    }

    #[test]
    fn scaled_form_matches_eq4() {
        let g = IsotropicGaussian::new(3, 1.0).unwrap();
        let (x, v) = ([0.3, -1.2, 0.7], [0.5, 0.9, -1.1]);
        for u in [0.1, 0.5, 0.9] {
            let closed = iso_gaussian_bounce_time(&x, &v, u);
            let general = g.bounce_time_from_budget(&x, &v, -f64::ln(u)).unwrap();
            assert!((closed - general).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_ray_time_hits_budget() {
        for &(a, b, e) in &[(1.0, 2.0, 0.7), (-3.0, 0.5, 2.0), (2.0, 0.0, 1.0), (0.0, 1.0, 0.3)] {
            let t = quadratic_ray_time(a, b, e).unwrap();
            let u = |s: f64| a * s + 0.5 * b * s * s;
            let t_min = if a < 0.0 { -a / b } else { 0.0 };
            assert!((u(t) - u(t_min) - e).abs() < 1e-12, "{a} {b} {e}");
        }
        assert_eq!(quadratic_ray_time(-1.0, 0.0, 1.0), None);
    }

    #[test]
    fn pair_factor_energy() {
        let f = GaussianFactor::pair(0, 1, 0.5);
        let x = [1.0, 2.0];
        assert!((f.energy(&x) - 0.5 * (1.0 - 2.0 + 4.0)).abs() < 1e-15);
        let mut g = [0.0; 2];
        f.gradient(&x, &mut g);
        assert_eq!(g, [0.0, 1.5]);
    }

    #[test]
    fn non_pd_precision_is_rejected() {
        let p = SparseSymmetric::from_triplets(2, [(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.5)]);
        assert_eq!(SparseGaussian::new(p), Err(Error::NotPositiveDefinite));
    }
}
