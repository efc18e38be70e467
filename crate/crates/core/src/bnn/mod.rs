//! One-hidden-layer ReLU classifier with a Gaussian prior: tempered posteriors,
//! Langevin/SGLD sampling, predictive evaluation and tempered MAP.

pub mod map;
pub mod mlp;
pub mod posterior;
pub mod predictive;
pub mod sampler;

pub use map::map_fit;
pub use mlp::{MlpArch, MlpParams};
pub use posterior::{cold_log_density, cold_to_tempered, BnnData, BnnLikelihood, BnnPosterior, PosteriorSpec};
pub use predictive::{predictive_eval, predictive_probs, EvalMode, PredictiveMetrics};
pub use sampler::{
    langevin_step, run_chain, sgld_step, sgld_step_size, ChainConfig, ChainOutput, ChainSample, DiagonalGaussian,
    MinibatchSchedule,
    Target,
};
