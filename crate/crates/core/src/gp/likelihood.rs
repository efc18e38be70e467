use serde::{Deserialize, Serialize};

use crate::curation::{curated_log_lik_logits, ClassProbs, ConsensusOutcome, CurationConfig, LikelihoodMode};
use crate::error::{invalid, Result};

/// Observation model linking latent GP values to targets.
///
/// Binary classification uses the logistic link on a single latent function
/// (logits `[0, f]`); `CategoricalSoftmax` uses one independent GP per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LikelihoodSpec {
    GaussianRegression { noise_std: f64 },
    BernoulliSigmoid,
    CategoricalSoftmax { num_classes: usize },
    Curated {
        inner: Box<LikelihoodSpec>,
        config: CurationConfig,
        mode: LikelihoodMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Real(f64),
    Outcome(ConsensusOutcome),
}

impl LikelihoodSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GaussianRegression { noise_std } if !(*noise_std > 0.0) => {
                Err(invalid(format!("noise_std must be positive, got {noise_std}")))
            }
            Self::CategoricalSoftmax { num_classes } if *num_classes < 2 => {
                Err(invalid("categorical likelihood needs at least 2 classes"))
            }
            Self::Curated { inner, .. } => match inner.as_ref() {
                Self::BernoulliSigmoid | Self::CategoricalSoftmax { .. } => inner.validate(),
                _ => Err(invalid("curated likelihood must wrap a classification likelihood")),
            },
            _ => Ok(()),
        }
    }

    /// Number of independent latent functions.
    pub fn latent_dim(&self) -> usize {
        match self {
            Self::GaussianRegression { .. } | Self::BernoulliSigmoid => 1,
            Self::CategoricalSoftmax { num_classes } => *num_classes,
            Self::Curated { inner, .. } => inner.latent_dim(),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Self::GaussianRegression { .. } => None,
            Self::BernoulliSigmoid => Some(2),
            Self::CategoricalSoftmax { num_classes } => Some(*num_classes),
            Self::Curated { inner, .. } => inner.num_classes(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::GaussianRegression { .. })
    }

    /// Same observation model with a different curated mode (identity for
    /// uncurated likelihoods).
    pub fn with_mode(&self, mode: LikelihoodMode) -> Self {
        match self {
            Self::Curated { inner, config, .. } => Self::Curated {
                inner: inner.clone(),
                config: *config,
                mode,
            },
            other => other.clone(),
        }
    }

    fn logits(&self, f: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            Self::BernoulliSigmoid => {
                out.push(0.0);
                out.push(f[0]);
            }
            Self::Curated { inner, .. } => inner.logits(f, out),
            _ => out.extend_from_slice(f),
        }
    }

    /// Single-labeller class probabilities at latent value `f`.
    pub fn class_probs(&self, f: &[f64]) -> Option<ClassProbs> {
        if self.is_gaussian() {
            return None;
        }
        let mut logits = Vec::new();
        self.logits(f, &mut logits);
        Some(ClassProbs::from_logits(&logits))
    }

    /// `log p(target | f)` and its gradient with respect to `f`.
    pub fn log_lik_grad(&self, f: &[f64], target: Target, grad: &mut [f64]) -> f64 {
        match (self, target) {
            (Self::GaussianRegression { noise_std }, Target::Real(y)) => {
                let var = noise_std * noise_std;
                let r = y - f[0];
                grad[0] = r / var;
                -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r * r / var
            }
            (_, Target::Outcome(outcome)) => {
                let (s, mode) = match self {
                    Self::Curated { config, mode, .. } => (config.num_labellers, *mode),
                    _ => (1, LikelihoodMode::Standard),
                };
                let mut logits = Vec::with_capacity(f.len() + 1);
                self.logits(f, &mut logits);
                let mut g = vec![0.0; logits.len()];
                let v = curated_log_lik_logits(&logits, outcome, s, mode, &mut g);
                match self.base() {
                    Self::BernoulliSigmoid => grad[0] = g[1],
                    _ => grad.copy_from_slice(&g),
                }
                v
            }
            _ => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                f64::NAN
            }
        }
    }

    fn base(&self) -> &Self {
        match self {
            Self::Curated { inner, .. } => inner.base(),
            other => other,
        }
    }

    /// Whether a point with this target contributes to the likelihood.
    pub fn includes(&self, target: Target) -> bool {
        match (self, target) {
            (Self::Curated { mode, .. }, Target::Outcome(ConsensusOutcome::NoConsensus)) => {
                mode.uses_noconsensus()
            }
            (Self::GaussianRegression { .. }, Target::Real(_)) => true,
            (Self::GaussianRegression { .. }, _) => false,
            (_, Target::Outcome(ConsensusOutcome::Label(_))) => true,
            _ => false,
        }
    }
}
