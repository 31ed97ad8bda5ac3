//! Chain and grid Gaussian Markov random fields.
//!
//! Both fields are sums of pairwise factors
//! `(x_i^2 - 2 rho x_i x_j + x_j^2) / 2` over the edges of the graph, so the
//! precision has `-rho` on every edge and the node degree on the diagonal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::expfam::{ExpFamilyFactor, ExpFamilyPosterior, PoissonFamily};
use super::gaussian::{marginal_variances, GaussianFactor, SparseGaussian, SparseSymmetric};
use crate::error::{Error, Result};
use crate::factor_graph::{Factor, FactorGraph};

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("pairwise precision must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

fn pair_precision(dim: usize, edges: &[(usize, usize)], rho: f64) -> SparseSymmetric {
    SparseSymmetric::from_triplets(
        dim,
        edges
            .iter()
            .flat_map(|&(i, j)| [(i, i, 1.0), (j, j, 1.0), (i, j, -rho)]),
    )
}

/// Chain-shaped field on `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGmrf {
    pub dim: usize,
    pub rho: f64,
}

impl ChainGmrf {
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("chain needs d >= 2, got {dim}")));
        }
        check_rho(rho)?;
        let m = Self { dim, rho };
        nalgebra::Cholesky::new(m.precision().to_dense()).ok_or(Error::NotPositiveDefinite)?;
        Ok(m)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.dim - 1).map(|k| (k, k + 1)).collect()
    }

    pub fn precision(&self) -> SparseSymmetric {
        pair_precision(self.dim, &self.edges(), self.rho)
    }

    pub fn factors(&self) -> Vec<Box<dyn Factor>> {
        self.edges()
            .into_iter()
            .map(|(i, j)| Box::new(GaussianFactor::pair(i, j, self.rho)) as Box<dyn Factor>)
            .collect()
    }

    pub fn factor_graph(&self) -> FactorGraph {
        FactorGraph::new(self.dim, self.factors()).expect("chain factors cover every coordinate")
    }

    /// The same target as a single global energy.
    pub fn global_model(&self) -> SparseGaussian {
        SparseGaussian::new(self.precision()).expect("checked at construction")
    }

    /// Exact marginal variances from the inverse precision.
    pub fn marginal_variances(&self) -> Vec<f64> {
        marginal_variances(&self.precision().to_dense()).expect("checked at construction")
    }
}

/// Factor graph of the chain field.
pub fn build_chain_gmrf(dim: usize, rho: f64) -> Result<FactorGraph> {
    Ok(ChainGmrf::new(dim, rho)?.factor_graph())
}

/// Latent field on a `side x side` grid with Poisson counts
/// `y_ij ~ Poisson(exp(x_ij))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoissonGmrf {
    pub side: usize,
    pub rho: f64,
    pub counts: Vec<u64>,
}

impl GridPoissonGmrf {
    /// Pairwise precision used by default for the latent field.
    pub const DEFAULT_RHO: f64 = 0.5;

    pub fn new(side: usize, rho: f64, counts: Vec<u64>) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidParameter(format!("grid side must be >= 2, got {side}")));
        }
        check_rho(rho)?;
        if counts.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                found: counts.len(),
            });
        }
        let m = Self { side, rho, counts };
        nalgebra::Cholesky::new(m.precision().to_dense()).ok_or(Error::NotPositiveDefinite)?;
        Ok(m)
    }

    /// Draws a latent field from the prior and counts given it; returns the
    /// model and the latent field.
    pub fn synthetic<R: Rng + ?Sized>(side: usize, rho: f64, rng: &mut R) -> Result<(Self, Vec<f64>)> {
        let empty = Self::new(side, rho, vec![0; side * side])?;
        let x = sample_gaussian(&empty.precision().to_dense(), rng)?;
        let counts = x
            .iter()
            .map(|xi| {
                Poisson::new(xi.exp())
                    .map(|p| p.sample(rng) as u64)
                    .map_err(|e| Error::InvalidParameter(format!("Poisson rate {}: {e}", xi.exp())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Self { counts, ..empty }, x))
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side + j
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..self.side {
            for j in 0..self.side {
                if j + 1 < self.side {
                    e.push((self.index(i, j), self.index(i, j + 1)));
                }
                if i + 1 < self.side {
                    e.push((self.index(i, j), self.index(i + 1, j)));
                }
            }
        }
        e
    }

    pub fn precision(&self) -> SparseSymmetric {
        pair_precision(self.dim(), &self.edges(), self.rho)
    }

    pub fn factor_graph(&self) -> FactorGraph {
        let mut factors: Vec<Box<dyn Factor>> = self
            .edges()
            .into_iter()
            .map(|(i, j)| Box::new(GaussianFactor::pair(i, j, self.rho)) as Box<dyn Factor>)
            .collect();
        for (k, &y) in self.counts.iter().enumerate() {
            let term = ExpFamilyPosterior::new(PoissonFamily, y as f64, 0.0).expect("zero prior scale");
            factors.push(Box::new(ExpFamilyFactor::new(k, term)));
        }
        FactorGraph::new(self.dim(), factors).expect("grid factors cover every coordinate")
    }
}

/// Factor graph of the grid field with Poisson observations.
pub fn build_grid_poisson_gmrf(side: usize, counts: Vec<u64>) -> Result<FactorGraph> {
    Ok(GridPoissonGmrf::new(side, GridPoissonGmrf::DEFAULT_RHO, counts)?.factor_graph())
}

/// Draw from `N(0, P^-1)` by solving `L^T x = z` with `P = L L^T`.
pub fn sample_gaussian<R: Rng + ?Sized>(precision: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let chol = nalgebra::Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite)?;
    let z = DVector::from_fn(precision.nrows(), |_, _| StandardNormal.sample(rng));
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(x.iter().copied().collect())
}
