//! Robust generalized Bayesian inference for discrete-outcome models.
//!
//! Posterior draws are obtained by repeatedly re-weighting the observed data
//! with Dirichlet weights and minimizing an estimated total variation
//! distance (TVD) between the weighted empirical distribution and the model.
//! A maximum-likelihood (KLD) baseline runs through the same machinery.
//!
//! Module map:
//!
//! - [`distributions`]: datasets, weighted empirical measures and model pmfs
//! - [`losses`]: the TVD estimator, the weighted negative log-likelihood and
//!   their gradients
//! - [`optimizer`]: BFGS, weighted MLE initializers and per-draw fitting
//! - [`npl`]: the posterior bootstrap sampler
//! - [`simgen`]: synthetic benchmark generators and train/test splits
//! - [`metrics`]: parameter error, absolute error, predictive likelihood
//! - [`verify`]: Monte Carlo checks of the robustness, concentration and
//!   consistency properties of the estimator
//! - [`cli`]: run configuration and the command implementations

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod npl;
pub mod optimizer;
pub mod simgen;
pub mod verify;

pub use distributions::{
    build_empirical, model_mean, model_pmf, ConditionalPmf, CovariateKind, Dataset, Family,
    ModelSpec, WeightedEmpirical,
};
pub use error::{Error, Result};
pub use losses::{kld_loss, loss_grad, tvd_between, tvd_loss, LossKind};
pub use npl::{posterior_bootstrap, NplConfig, PosteriorSamples};
pub use optimizer::{bfgs, fit_theta, weighted_mle, BfgsOptions, FitOptions, OptimResult};
