//! Latent Gaussian models with sparse GMRF priors and their approximate
//! Bayesian inference by nested Laplace approximations.
//!
//! A [`LatentGaussianModel`] couples Gaussian observations on a log scale to
//! a latent vector `θ` of fixed coefficients and structured random effects,
//! governed by log-precision hyperparameters `ψ`. Because observations are
//! Gaussian, `θ | ψ, y` is exactly Gaussian and `p(ψ | y)` is available up
//! to a constant. [`fit`] locates its mode, explores a regular lattice around
//! it, and mixes the per-point Gaussian conditionals into posterior marginals.

mod conditional;
mod error;
mod fit;
mod grid;
mod mixture;
mod model;
mod optimize;

pub use conditional::{conditional_posterior, log_hyper_posterior, ConditionalGaussian, ConstraintCorrection};
pub use error::{InlaError, Result};
pub use fit::{
    conditional_at_mode, default_start, fit, CombinationSet, CompiledRow, DicSummary, HyperObjective, InlaConfig,
    InlaFit, PointPosterior,
};
pub use grid::{explore_grid, marginal_hyperparameter, GridOptions, HyperGrid, HyperGridPoint};
pub use mixture::{MixtureComponent, MixtureMarginal, MixtureSummary, Scale};
pub use model::{
    build_incidence, gaussian_loglik, BlockKind, EffectBlock, HyperPrior, HyperSlot, Incidence, LatentGaussianModel,
    ModelBuilder, SparseRow, TreeSlots, DEFAULT_FIXED_PRECISION, ICAR_JITTER,
};
pub use optimize::{fd_gradient, fd_hessian, find_mode, negative_hessian_eigen, LogDensity, ModeOptions, ModeResult};
