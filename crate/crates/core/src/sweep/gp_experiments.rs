//! Data generated from a known GP: regression, classification and the three
//! curated classification regimes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentKind, Metrics};
use crate::curation::{consensus_outcome, sample_class, ClassProbs, ConsensusOutcome, CurationConfig, LikelihoodMode};
use crate::error::{invalid, Result};
use crate::gp::{
    evaluate, fit_vi, kernel_matrix, sample_prior_function, FitSettings, GpData, KernelConfig, LikelihoodSpec, Target,
    TemperConfig,
};
use crate::optim::OptimSettings;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpProblem {
    pub kernel: KernelConfig,
    pub x_min: f64,
    pub x_max: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Observation noise for the regression kind.
    pub noise_std: f64,
    pub fit: FitSettings,
}

/// Iteration cap for sweep fits. Held-out metrics settle to ~1e-4 nats well
/// before this; the remaining iterations only move near-flat directions.
pub const SWEEP_MAX_ITERS: u64 = 400;

impl Default for GpProblem {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            x_min: -10.0,
            x_max: 10.0,
            n_train: 50,
            n_test: 200,
            noise_std: 1.0,
            fit: FitSettings {
                optim: OptimSettings {
                    max_iters: SWEEP_MAX_ITERS,
                    ..OptimSettings::default()
                },
                ..FitSettings::default()
            },
        }
    }
}

/// Inputs and latent function values shared by every λ (and every S) of one replicate.
#[derive(Debug, Clone)]
pub struct GpReplicate {
    pub x_train: Vec<Vec<f64>>,
    pub x_test: Vec<Vec<f64>>,
    pub f_train: Vec<f64>,
    pub f_test: Vec<f64>,
}

impl GpReplicate {
    pub fn generate(problem: &GpProblem, seed: u64) -> Result<Self> {
        if problem.n_train == 0 || problem.n_test == 0 || !(problem.x_min < problem.x_max) {
            return Err(invalid("GP problem needs train/test points and a non-empty input range"));
        }
        let mut rng = rng_from_seed(seed);
        let n = problem.n_train + problem.n_test;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(problem.x_min..problem.x_max)])
            .collect();
        let f = sample_prior_function(&kernel_matrix(&x, &problem.kernel), &mut rng)?;
        let (x_train, x_test) = x.split_at(problem.n_train);
        Ok(Self {
            x_train: x_train.to_vec(),
            x_test: x_test.to_vec(),
            f_train: f.as_slice()[..problem.n_train].to_vec(),
            f_test: f.as_slice()[problem.n_train..].to_vec(),
        })
    }
}

fn sigmoid_probs(f: f64) -> ClassProbs {
    ClassProbs::from_logits(&[0.0, f])
}

fn curated_targets<R: Rng + ?Sized>(f: &[f64], s: usize, rng: &mut R) -> Result<Vec<Target>> {
    f.iter()
        .map(|&fi| {
            let probs = sigmoid_probs(fi);
            let votes: Vec<usize> = (0..s).map(|_| sample_class(&probs, rng)).collect();
            Ok(Target::Outcome(consensus_outcome(&votes)?))
        })
        .collect()
}

fn curated(s: usize, mode: LikelihoodMode) -> Result<LikelihoodSpec> {
    Ok(LikelihoodSpec::Curated {
        inner: Box::new(LikelihoodSpec::BernoulliSigmoid),
        config: CurationConfig::new(s, true)?,
        mode,
    })
}

/// Training data, test data and the likelihoods used for fitting and scoring.
pub struct GpTask {
    pub train: GpData,
    pub test: GpData,
    pub train_lik: LikelihoodSpec,
    pub test_lik: LikelihoodSpec,
}

pub fn build_task(kind: ExperimentKind, problem: &GpProblem, rep: &GpReplicate, s: usize, seed: u64) -> Result<GpTask> {
    let mut rng = rng_from_seed(seed);
    let (train_targets, test_targets, train_lik, test_lik): (Vec<Target>, Vec<Target>, _, _) = match kind {
        ExperimentKind::GpRegression => {
            let mut noisy = |f: &[f64]| -> Vec<Target> {
                f.iter()
                    .map(|&fi| Target::Real(fi + problem.noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal)))
                    .collect()
            };
            let lik = LikelihoodSpec::GaussianRegression {
                noise_std: problem.noise_std,
            };
            (noisy(&rep.f_train), noisy(&rep.f_test), lik.clone(), lik)
        }
        ExperimentKind::GpClassification => {
            let mut draw = |f: &[f64]| -> Vec<Target> {
                f.iter()
                    .map(|&fi| Target::Outcome(ConsensusOutcome::Label(sample_class(&sigmoid_probs(fi), &mut rng))))
                    .collect()
            };
            let (a, b) = (draw(&rep.f_train), draw(&rep.f_test));
            (a, b, LikelihoodSpec::BernoulliSigmoid, LikelihoodSpec::BernoulliSigmoid)
        }
        ExperimentKind::GpCuratedExact => (
            curated_targets(&rep.f_train, s, &mut rng)?,
            curated_targets(&rep.f_test, s, &mut rng)?,
            curated(s, LikelihoodMode::Exact)?,
            curated(s, LikelihoodMode::Exact)?,
        ),
        ExperimentKind::GpCuratedTrainStandardTestExact => (
            curated_targets(&rep.f_train, s, &mut rng)?,
            curated_targets(&rep.f_test, s, &mut rng)?,
            curated(s, LikelihoodMode::Standard)?,
            curated(s, LikelihoodMode::Exact)?,
        ),
        ExperimentKind::GpCuratedStandard => (
            curated_targets(&rep.f_train, s, &mut rng)?,
            curated_targets(&rep.f_test, s, &mut rng)?,
            curated(s, LikelihoodMode::Standard)?,
            curated(s, LikelihoodMode::Standard)?,
        ),
        other => return Err(invalid(format!("{} is not a GP experiment", other.name()))),
    };
    Ok(GpTask {
        train: GpData {
            inputs: rep.x_train.clone(),
            targets: train_targets,
        },
        test: GpData {
            inputs: rep.x_test.clone(),
            targets: test_targets,
        },
        train_lik,
        test_lik,
    })
}

/// Test metrics of one replicate at every λ of the grid.
pub fn replicate_curve(
    kind: ExperimentKind,
    problem: &GpProblem,
    lambda_grid: &[f64],
    s: usize,
    seed: u64,
) -> Result<Vec<Metrics>> {
    let rep = GpReplicate::generate(problem, derive_seed(seed, &[0]))?;
    let task = build_task(kind, problem, &rep, s, derive_seed(seed, &[1, s as u64]))?;
    let fit: &FitSettings = &problem.fit;
    lambda_grid
        .iter()
        .map(|&lambda| {
            let (state, _) = fit_vi(
                &task.train,
                &problem.kernel,
                &task.train_lik,
                TemperConfig::new(lambda)?,
                fit,
                derive_seed(seed, &[2]),
            )?;
            let mut rng = rng_from_seed(derive_seed(seed, &[3]));
            let m = evaluate(&state, &task.test, &task.test_lik, fit.n_mc_eval, &mut rng)?;
            Ok(Metrics {
                test_loglik: m.mean_log_lik,
                test_acc: m.accuracy,
            })
        })
        .collect()
}
