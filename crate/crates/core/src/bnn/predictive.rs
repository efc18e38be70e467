use serde::{Deserialize, Serialize};

use super::mlp::{forward_into, MlpArch, Workspace};
use super::posterior::BnnData;
use crate::curation::{argmax, curated_log_lik_logits, ClassProbs, ConsensusOutcome, LikelihoodMode};
use crate::error::{invalid, Result};

/// How held-out labels are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// `log p_y` on consensus points.
    Standard,
    /// `S log p_y` on consensus points, `log(1 − Σ p^S)` on noconsensus points.
    Exact,
    /// `log softmax(S log p)_y` on consensus points.
    Conditional,
    /// `log p_{y_s}` averaged over labellers.
    MultiLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMetrics {
    /// Mean per scored point (per labeller in multi-label mode).
    pub log_lik: f64,
    /// Fraction of consensus points (or votes) matched by the predictive argmax.
    pub accuracy: f64,
}

/// Mean of the per-sample class probabilities at `x`.
pub fn predictive_probs(samples: &[Vec<f64>], arch: &MlpArch, x: &[f64]) -> Result<ClassProbs> {
    let mut ws = Workspace::new(arch);
    let mut mean = vec![0.0; arch.output_classes];
    accumulate_probs(samples, arch, x, &mut ws, &mut mean)?;
    ClassProbs::new(mean)
}

fn accumulate_probs(samples: &[Vec<f64>], arch: &MlpArch, x: &[f64], ws: &mut Workspace, mean: &mut [f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(invalid("need at least one sample"));
    }
    if x.len() != arch.input_dim {
        return Err(invalid("input dimension does not match the network"));
    }
    mean.iter_mut().for_each(|m| *m = 0.0);
    for theta in samples {
        if theta.len() != arch.num_params() {
            return Err(invalid("sample length does not match the network"));
        }
        forward_into(theta, arch, x, ws);
        let p = ClassProbs::from_logits(&ws.logits);
        for (m, v) in mean.iter_mut().zip(p.as_slice()) {
            *m += v;
        }
    }
    let n = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(())
}

pub fn predictive_eval(samples: &[Vec<f64>], arch: &MlpArch, test: &BnnData, mode: EvalMode) -> Result<PredictiveMetrics> {
    if mode == EvalMode::MultiLabel && test.votes.is_none() {
        return Err(invalid("multi-label evaluation needs raw votes"));
    }
    let mut ws = Workspace::new(arch);
    let k = arch.output_classes;
    let mut mean = vec![0.0; k];
    let mut log_p = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let (mut ll, mut n_ll, mut hits, mut n_acc) = (0.0, 0usize, 0usize, 0usize);
    for i in 0..test.len() {
        let outcome = test.outcomes[i];
        let scored = mode == EvalMode::Exact || mode == EvalMode::MultiLabel || outcome.is_consensus();
        if !scored {
            continue;
        }
        accumulate_probs(samples, arch, test.x(i), &mut ws, &mut mean)?;
        for (l, m) in log_p.iter_mut().zip(&mean) {
            *l = m.ln();
        }
        let pred = argmax(&mean);
        let s = test.num_labellers;
        match mode {
            EvalMode::MultiLabel => {
                for &y in &test.votes.as_ref().expect("checked above")[i] {
                    ll += log_p[y];
                    n_ll += 1;
                    hits += usize::from(pred == y);
                    n_acc += 1;
                }
            }
            _ => {
                let lmode = match mode {
                    EvalMode::Standard => LikelihoodMode::Standard,
                    EvalMode::Exact => LikelihoodMode::Exact,
                    _ => LikelihoodMode::Conditional,
                };
                ll += curated_log_lik_logits(&log_p, outcome, s, lmode, &mut scratch);
                n_ll += 1;
                if let ConsensusOutcome::Label(y) = outcome {
                    hits += usize::from(pred == y);
                    n_acc += 1;
                }
            }
        }
    }
    if n_ll == 0 {
        return Err(invalid("no test points are scored under this mode"));
    }
    Ok(PredictiveMetrics {
        log_lik: ll / n_ll as f64,
        accuracy: if n_acc == 0 { f64::NAN } else { hits as f64 / n_acc as f64 },
    })
}
