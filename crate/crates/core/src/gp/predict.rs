use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::kernel::se_kernel;
use super::likelihood::{LikelihoodSpec, Target};
use super::vi::{GpData, GpVariationalState, McDraws};
use crate::curation::{log_sum_exp, ClassProbs, ConsensusOutcome};
use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct LatentPredictive {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Kernel with the state's jitter on pairs of identical inputs, so that the
/// prior used for prediction is the one the state was fitted under.
fn jittered_kernel(state: &GpVariationalState, x1: &[Vec<f64>], x2: &[Vec<f64>]) -> DMatrix<f64> {
    let mut k = se_kernel(x1, x2, &state.kernel);
    for (i, a) in x1.iter().enumerate() {
        for (j, b) in x2.iter().enumerate() {
            if a == b {
                k[(i, j)] += state.jitter;
            }
        }
    }
    k
}

/// Joint predictive of each latent function at `x_test`:
/// mean `K*ᵀ A v`, covariance `K** − K*ᵀ (Λ⁻¹ + K)⁻¹ K*`.
pub fn predict(state: &GpVariationalState, x_test: &[Vec<f64>]) -> Vec<LatentPredictive> {
    let ks = jittered_kernel(state, &state.train_inputs, x_test);
    let kss = jittered_kernel(state, x_test, x_test);
    (0..state.latents.len())
        .map(|d| {
            let mean = ks.tr_mul(state.a_vec(d));
            let cov = &kss - ks.tr_mul(&(state.a_mat(d) * &ks));
            LatentPredictive {
                mean,
                cov: (&cov + cov.transpose()) * 0.5,
            }
        })
        .collect()
}

/// Predictive means and marginal variances only.
pub fn predict_marginals(state: &GpVariationalState, x_test: &[Vec<f64>]) -> Vec<(DVector<f64>, DVector<f64>)> {
    let ks = jittered_kernel(state, &state.train_inputs, x_test);
    let prior_var = state.kernel.variance() + state.jitter;
    (0..state.latents.len())
        .map(|d| {
            let mean = ks.tr_mul(state.a_vec(d));
            let aks = state.a_mat(d) * &ks;
            let var = DVector::from_fn(x_test.len(), |j, _| {
                (prior_var - ks.column(j).dot(&aks.column(j))).max(1e-300)
            });
            (mean, var)
        })
        .collect()
}

/// Log predictive probability of each target, `log E_Q[p(target | f*)]`.
/// Non-Gaussian likelihoods use `n_mc` antithetic draws per point. Points the
/// likelihood ignores get `None`.
pub fn predictive_log_lik<R: Rng + ?Sized>(
    state: &GpVariationalState,
    test: &GpData,
    lik: &LikelihoodSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<Option<f64>>> {
    if lik.latent_dim() != state.latents.len() {
        return Err(invalid("likelihood and state have different latent dimensions"));
    }
    let marg = predict_marginals(state, &test.inputs);
    let dim = marg.len();
    if let LikelihoodSpec::GaussianRegression { noise_std } = lik {
        let (m, v) = &marg[0];
        return Ok(test
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| match t {
                Target::Real(y) => {
                    let var = v[i] + noise_std * noise_std;
                    let r = y - m[i];
                    Some(-0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r * r / var)
                }
                _ => None,
            })
            .collect());
    }
    let draws = McDraws::new(test.len(), n_mc, dim, rng);
    let mut f = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut lls = vec![0.0; draws.n_mc()];
    Ok(test
        .targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if !lik.includes(t) {
                return None;
            }
            for (j, ll) in lls.iter_mut().enumerate() {
                let eps = draws.draw(i, j);
                for d in 0..dim {
                    f[d] = marg[d].0[i] + marg[d].1[i].sqrt() * eps[d];
                }
                *ll = lik.log_lik_grad(&f, t, &mut g);
            }
            Some(log_sum_exp(lls.iter().copied()) - (lls.len() as f64).ln())
        })
        .collect())
}

/// Single-labeller predictive class probabilities `E_Q[softmax(f*)]`.
pub fn predict_class_probs<R: Rng + ?Sized>(
    state: &GpVariationalState,
    x_test: &[Vec<f64>],
    lik: &LikelihoodSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<ClassProbs>> {
    let k = lik
        .num_classes()
        .ok_or_else(|| invalid("class probabilities need a classification likelihood"))?;
    let marg = predict_marginals(state, x_test);
    let dim = marg.len();
    let draws = McDraws::new(x_test.len(), n_mc, dim, rng);
    let mut f = vec![0.0; dim];
    (0..x_test.len())
        .map(|i| {
            let mut acc = vec![0.0; k];
            for j in 0..draws.n_mc() {
                let eps = draws.draw(i, j);
                for d in 0..dim {
                    f[d] = marg[d].0[i] + marg[d].1[i].sqrt() * eps[d];
                }
                let p = lik.class_probs(&f).expect("classification likelihood");
                acc.iter_mut().zip(p.as_slice()).for_each(|(a, b)| *a += b);
            }
            let n = draws.n_mc() as f64;
            ClassProbs::new(acc.into_iter().map(|a| a / n).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveMetrics {
    /// Mean log predictive probability over contributing test points.
    pub mean_log_lik: f64,
    /// Argmax accuracy over consensus test points; NaN for regression.
    pub accuracy: f64,
}

pub fn evaluate<R: Rng + ?Sized>(
    state: &GpVariationalState,
    test: &GpData,
    lik: &LikelihoodSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<PredictiveMetrics> {
    let lls: Vec<f64> = predictive_log_lik(state, test, lik, n_mc, rng)?
        .into_iter()
        .flatten()
        .collect();
    if lls.is_empty() {
        return Err(invalid("no test points contribute to the likelihood"));
    }
    let mean_log_lik = lls.iter().sum::<f64>() / lls.len() as f64;
    let accuracy = if lik.is_gaussian() {
        f64::NAN
    } else {
        let labelled: Vec<(usize, &Vec<f64>)> = test
            .targets
            .iter()
            .zip(&test.inputs)
            .filter_map(|(t, x)| match t {
                Target::Outcome(ConsensusOutcome::Label(y)) => Some((*y, x)),
                _ => None,
            })
            .collect();
        if labelled.is_empty() {
            f64::NAN
        } else {
            let xs: Vec<Vec<f64>> = labelled.iter().map(|(_, x)| (*x).clone()).collect();
            let probs = predict_class_probs(state, &xs, lik, n_mc, rng)?;
            let hits = labelled
                .iter()
                .zip(&probs)
                .filter(|((y, _), p)| p.argmax() == *y)
                .count();
            hits as f64 / labelled.len() as f64
        }
    };
    Ok(PredictiveMetrics {
        mean_log_lik,
        accuracy,
    })
}
