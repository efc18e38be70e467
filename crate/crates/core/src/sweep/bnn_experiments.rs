//! Toy-network studies: curated labels from a teacher network drawn from the
//! prior, fitted by Langevin sampling (or MAP) at each λ.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExperimentKind, Metrics};
use crate::bnn::{
    map_fit, predictive_eval, run_chain, BnnData, BnnLikelihood, BnnPosterior, ChainConfig, EvalMode, MlpArch,
    MlpParams, PosteriorSpec,
};
use crate::curation::{consensus_outcome, sample_class, ClassProbs, ConsensusOutcome};
use crate::error::{invalid, Result};
use crate::gp::TemperConfig;
use crate::optim::OptimSettings;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnnProblem {
    pub arch: MlpArch,
    /// Prior scale of the fitted network.
    pub prior_var: f64,
    /// Prior scale the teacher network is drawn from.
    pub teacher_prior_var: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub chain: ChainConfig,
    pub map: OptimSettings,
}

impl Default for BnnProblem {
    fn default() -> Self {
        Self {
            arch: MlpArch {
                input_dim: 5,
                hidden_units: 30,
                output_classes: 2,
            },
            prior_var: 1.0,
            teacher_prior_var: 1.0,
            n_train: 100,
            n_test: 1000,
            chain: ChainConfig::default(),
            map: OptimSettings {
                max_iters: 2000,
                grad_tol: 1e-5,
                history: 10,
            },
        }
    }
}

/// Teacher network and standard-normal inputs shared by every λ of one replicate.
#[derive(Debug, Clone)]
pub struct BnnReplicate {
    pub teacher: MlpParams,
    pub x_train: Vec<Vec<f64>>,
    pub x_test: Vec<Vec<f64>>,
}

impl BnnReplicate {
    pub fn generate(problem: &BnnProblem, seed: u64) -> Result<Self> {
        if problem.n_train == 0 || problem.n_test == 0 {
            return Err(invalid("BNN problem needs train and test points"));
        }
        let mut rng = rng_from_seed(seed);
        let teacher = MlpParams::sample_prior(problem.arch, problem.teacher_prior_var, &mut rng)?;
        let d = problem.arch.input_dim;
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let x_train = draw(problem.n_train);
        let x_test = draw(problem.n_test);
        Ok(Self {
            teacher,
            x_train,
            x_test,
        })
    }

    /// `S` votes per input from the teacher's class probabilities, and the
    /// consensus outcome of each vote tuple.
    fn label<R: Rng + ?Sized>(&self, x: &[Vec<f64>], s: usize, rng: &mut R) -> Result<BnnData> {
        let mut votes = Vec::with_capacity(x.len());
        let mut outcomes = Vec::with_capacity(x.len());
        for xi in x {
            let probs: ClassProbs = self.teacher.class_probs(xi)?;
            let v: Vec<usize> = (0..s).map(|_| sample_class(&probs, rng)).collect();
            outcomes.push(consensus_outcome(&v)?);
            votes.push(v);
        }
        BnnData::new(x, outcomes, Some(&votes), self.teacher.arch.output_classes, s)
    }
}

/// Replaces each consensus label with probability `p` by a uniform class draw.
fn add_label_noise<R: Rng + ?Sized>(data: &mut BnnData, p: f64, rng: &mut R) {
    if p == 0.0 {
        return;
    }
    for o in &mut data.outcomes {
        if o.is_consensus() && rng.random::<f64>() < p {
            *o = ConsensusOutcome::Label(rng.random_range(0..data.num_classes));
        }
    }
    data.votes = None;
}

/// One training regime: data, likelihood, step-size scaling and the test
/// scores reported for it.
pub struct BnnArm {
    pub train: BnnData,
    pub likelihood: BnnLikelihood,
    pub per_labeller_lr_scaling: bool,
    pub evals: Vec<EvalMode>,
}

impl BnnArm {
    fn standard(train: BnnData) -> Self {
        Self {
            train,
            likelihood: BnnLikelihood::Standard,
            per_labeller_lr_scaling: false,
            evals: vec![EvalMode::Standard],
        }
    }
}

/// Training arms and the shared test set of one replicate.
pub struct BnnTask {
    pub arms: Vec<BnnArm>,
    pub test: BnnData,
    pub inference: Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    Langevin,
    Map,
}

pub fn build_task(
    kind: ExperimentKind,
    rep: &BnnReplicate,
    s: usize,
    p: f64,
    label_seed: u64,
    noise_seed: u64,
) -> Result<BnnTask> {
    let mut rng = rng_from_seed(label_seed);
    let train = rep.label(&rep.x_train, s, &mut rng)?;
    let test = rep.label(&rep.x_test, s, &mut rng)?;
    let (arms, inference) = match kind {
        ExperimentKind::BnnCuratedStandard => (vec![BnnArm::standard(train)], Inference::Langevin),
        // the multi-label arm is scored per vote on every test input, and also
        // on the consensus test labels the single-label arm sees
        ExperimentKind::BnnMultilabel => (
            vec![
                BnnArm::standard(train.clone()),
                BnnArm {
                    train,
                    likelihood: BnnLikelihood::MultiLabel,
                    per_labeller_lr_scaling: true,
                    evals: vec![EvalMode::MultiLabel, EvalMode::Standard],
                },
            ],
            Inference::Langevin,
        ),
        ExperimentKind::BnnNoise => {
            let mut noisy = train;
            add_label_noise(&mut noisy, p, &mut rng_from_seed(noise_seed));
            (vec![BnnArm::standard(noisy)], Inference::Langevin)
        }
        ExperimentKind::MapSweep => (vec![BnnArm::standard(train)], Inference::Map),
        other => return Err(invalid(format!("{} is not a BNN experiment", other.name()))),
    };
    Ok(BnnTask { arms, test, inference })
}

/// Test metrics of one replicate at every λ, one row per (arm, eval) pair in
/// arm order.
pub fn replicate_curves(
    kind: ExperimentKind,
    problem: &BnnProblem,
    lambda_grid: &[f64],
    s: usize,
    p: f64,
    seed: u64,
) -> Result<Vec<Vec<Metrics>>> {
    let rep = BnnReplicate::generate(problem, derive_seed(seed, &[0]))?;
    let task = build_task(
        kind,
        &rep,
        s,
        p,
        derive_seed(seed, &[1, s as u64]),
        derive_seed(seed, &[3, s as u64, p.to_bits()]),
    )?;
    let arch = problem.arch;
    let mut rows = Vec::new();
    for arm in &task.arms {
        let mut per_eval = vec![Vec::with_capacity(lambda_grid.len()); arm.evals.len()];
        for &lambda in lambda_grid {
            let spec = PosteriorSpec {
                temper: TemperConfig::new(lambda)?,
                likelihood: arm.likelihood,
            };
            let mut rng = rng_from_seed(derive_seed(seed, &[2]));
            let init = MlpParams::sample_prior(arch, problem.prior_var, &mut rng)?;
            let samples = match task.inference {
                Inference::Langevin => {
                    let post = BnnPosterior::for_params(&init, &arm.train, spec)?;
                    let chain = ChainConfig {
                        per_labeller_lr_scaling: arm.per_labeller_lr_scaling,
                        ..problem.chain
                    };
                    run_chain(&init.theta, &post, &chain, &mut rng, None)?.thetas()
                }
                Inference::Map => vec![map_fit(&init, &arm.train, spec, &problem.map)?.0.theta],
            };
            for (row, &mode) in per_eval.iter_mut().zip(&arm.evals) {
                let m = predictive_eval(&samples, &arch, &task.test, mode)?;
                row.push(Metrics {
                    test_loglik: m.log_lik,
                    test_acc: m.accuracy,
                });
            }
        }
        rows.extend(per_eval);
    }
    Ok(rows)
}
