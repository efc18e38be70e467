//! Gaussian-process models fitted by tempered variational inference.

pub mod kernel;
pub mod likelihood;
pub mod predict;
pub mod vi;

pub use kernel::{kernel_matrix, robust_cholesky, sample_prior_function, se_kernel, KernelConfig};
pub use likelihood::{LikelihoodSpec, Target};
pub use predict::{evaluate, predict, predict_class_probs, predict_marginals, predictive_log_lik, LatentPredictive, PredictiveMetrics};
pub use vi::{
    elbo_and_grad, fit_vi, tempered_elbo, variational_posterior, ElboTerms, FitReport, FitSettings, GpData,
    GpStateDoc, GpVariationalState, LatentPosterior, McDraws, TemperConfig,
};
