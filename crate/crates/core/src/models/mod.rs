//! Concrete targets: Gaussians, Gaussian Markov random fields,
//! exponential-family posteriors and logistic regression.

mod expfam;
mod gaussian;
mod gmrf;
mod logistic;

pub use expfam::{expfam_bounce_times, ExpFamilyFactor, ExpFamilyPosterior, ExponentialFamily, PoissonFamily};
pub use gaussian::{
    iso_gaussian_bounce_time, marginal_variances, quadratic_ray_time, GaussianFactor, IsotropicGaussian,
    SparseGaussian, SparseSymmetric,
};
pub use gmrf::{build_chain_gmrf, build_grid_poisson_gmrf, sample_gaussian, ChainGmrf, GridPoissonGmrf};
pub use logistic::{
    logistic, logistic_energy_grad, logistic_local_bps, per_datum_bound, precompute_alias, sample_thinned_factor,
    softplus, AliasTables, LogisticBpsOptions, LogisticCounters, LogisticData, LogisticRun,
};
