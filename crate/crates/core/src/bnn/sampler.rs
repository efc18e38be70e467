use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::Rng as ChainRng;

/// Unnormalised log-density with gradient.
pub trait Target {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log-density.
    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    /// Number of data points, for minibatching. Zero means "not minibatchable".
    fn num_points(&self) -> usize {
        0
    }

    /// Unbiased estimate of [`Target::log_density`] from the points in `batch`.
    fn minibatch_log_density(&self, theta: &[f64], _batch: &[usize], grad: &mut [f64]) -> f64 {
        self.log_density(theta, grad)
    }

    fn labels_per_point(&self) -> usize {
        1
    }
}

/// `−½ Σ (θ_i − μ_i)² / σ_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Target for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..theta.len() {
            let d = theta[i] - self.mean[i];
            v -= 0.5 * d * d / self.var[i];
            grad[i] = -d / self.var[i];
        }
        v
    }
}

/// `θ ← θ + (ε/2)·grad + √ε·ξ`. `step` is reported on divergence.
pub fn langevin_step<R: Rng + ?Sized>(theta: &mut [f64], grad: &[f64], eps: f64, step: usize, rng: &mut R) -> Result<()> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::ChainDivergence {
            step,
            reason: format!("gradient component {i} is {}", grad[i]),
        });
    }
    let noise = eps.sqrt();
    for (t, g) in theta.iter_mut().zip(grad) {
        let xi: f64 = rng.sample(StandardNormal);
        *t += 0.5 * eps * g + noise * xi;
    }
    if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
        return Err(Error::ChainDivergence {
            step,
            reason: format!("parameter {i} became {}", theta[i]),
        });
    }
    Ok(())
}

/// The step size SGLD actually uses: `ε / S` when each point carries `S` labels
/// and per-labeller scaling is on.
pub fn sgld_step_size(eps: f64, labels_per_point: usize, per_labeller_lr_scaling: bool) -> f64 {
    if per_labeller_lr_scaling {
        eps / labels_per_point.max(1) as f64
    } else {
        eps
    }
}

/// Langevin update with a minibatch gradient already scaled by `N/|B|`.
pub fn sgld_step<R: Rng + ?Sized>(
    theta: &mut [f64],
    grad_estimate: &[f64],
    eps: f64,
    labels_per_point: usize,
    per_labeller_lr_scaling: bool,
    step: usize,
    rng: &mut R,
) -> Result<()> {
    langevin_step(
        theta,
        grad_estimate,
        sgld_step_size(eps, labels_per_point, per_labeller_lr_scaling),
        step,
        rng,
    )
}

/// Minibatches drawn without replacement: each epoch is a fresh permutation
/// cut into `batch_size` pieces, dropping the remainder.
#[derive(Debug, Clone)]
pub struct MinibatchSchedule {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    rng: ChainRng,
}

impl MinibatchSchedule {
    pub fn new(num_points: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > num_points {
            return Err(invalid("batch size must lie in 1..=N"));
        }
        Ok(Self {
            order: (0..num_points).collect(),
            batch_size,
            cursor: num_points,
            rng: ChainRng::seed_from_u64(seed),
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch_size;
        &self.order[start..self.cursor]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub step_size: f64,
    pub burn_in: usize,
    pub total_steps: usize,
    pub thinning: usize,
    /// 0 means full batch.
    pub minibatch_size: usize,
    pub per_labeller_lr_scaling: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            burn_in: 4000,
            total_steps: 20_000,
            thinning: 320,
            minibatch_size: 0,
            per_labeller_lr_scaling: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step size must be positive"));
        }
        if self.burn_in >= self.total_steps {
            return Err(invalid("burn-in must be shorter than the chain"));
        }
        if self.thinning == 0 {
            return Err(invalid("thinning must be at least 1"));
        }
        Ok(())
    }

    pub fn retained_count(&self) -> usize {
        (self.total_steps - self.burn_in) / self.thinning
    }

    fn is_retained(&self, step: usize) -> bool {
        step > self.burn_in && (step - self.burn_in) % self.thinning == 0
    }
}

/// One retained sample; also the JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub step: usize,
    pub log_posterior: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub samples: Vec<ChainSample>,
}

impl ChainOutput {
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.theta.clone()).collect()
    }
}

/// Runs an unadjusted Langevin chain from `init`, keeping every `thinning`-th
/// state after burn-in. Retained samples are also written to `trace` as JSON
/// lines as they are drawn, so a diverging chain leaves its partial trace there.
pub fn run_chain<T: Target + ?Sized>(
    init: &[f64],
    target: &T,
    config: &ChainConfig,
    rng: &mut ChainRng,
    mut trace: Option<&mut dyn Write>,
) -> Result<ChainOutput> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(invalid(format!("init has {} parameters, target {}", init.len(), target.dim())));
    }
    let n = target.num_points();
    let minibatch = config.minibatch_size > 0 && config.minibatch_size < n;
    let mut schedule = if minibatch {
        Some(MinibatchSchedule::new(n, config.minibatch_size, rng.random())?)
    } else {
        None
    };
    let eps = sgld_step_size(config.step_size, target.labels_per_point(), config.per_labeller_lr_scaling);

    let mut theta = init.to_vec();
    let mut grad = vec![0.0; theta.len()];
    let mut scratch = vec![0.0; if minibatch { theta.len() } else { 0 }];
    let mut samples = Vec::with_capacity(config.retained_count());
    for step in 0..=config.total_steps {
        let retained = config.is_retained(step);
        // retained samples always report the full-data log-posterior
        let lp = match schedule.as_mut() {
            Some(sched) => {
                let est = target.minibatch_log_density(&theta, sched.next_batch(), &mut grad);
                if retained {
                    target.log_density(&theta, &mut scratch)
                } else {
                    est
                }
            }
            None => target.log_density(&theta, &mut grad),
        };
        if lp.is_nan() || lp == f64::INFINITY || lp == f64::NEG_INFINITY {
            return Err(Error::ChainDivergence {
                step,
                reason: format!("log-posterior is {lp}"),
            });
        }
        if retained {
            let sample = ChainSample {
                step,
                log_posterior: lp,
                theta: theta.clone(),
            };
            if let Some(w) = trace.as_mut() {
                serde_json::to_writer(&mut **w, &sample)?;
                w.write_all(b"\n")?;
            }
            samples.push(sample);
        }
        if step < config.total_steps {
            langevin_step(&mut theta, &grad, eps, step, rng)?;
        }
    }
    Ok(ChainOutput { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn retained_count_matches_config() {
        let cfg = ChainConfig::default();
        assert_eq!(cfg.retained_count(), 50);
        let short = ChainConfig {
            burn_in: 10,
            total_steps: 105,
            thinning: 7,
            step_size: 0.1,
            ..ChainConfig::default()
        };
        let target = DiagonalGaussian {
            mean: vec![0.0],
            var: vec![1.0],
        };
        let out = run_chain(&[0.0], &target, &short, &mut rng_from_seed(1), None).unwrap();
        assert_eq!(out.samples.len(), short.retained_count());
        assert_eq!(out.samples.len(), 13);
        assert_eq!(out.samples[0].step, 17);
        assert!(ChainConfig { burn_in: 5, total_steps: 5, ..short }.validate().is_err());
    }

    #[test]
    fn tiny_step_is_noise_dominated() {
        let mut theta = vec![1.0; 1000];
        let before = theta.clone();
        langevin_step(&mut theta, &vec![0.0; 1000], 1e-12, 0, &mut rng_from_seed(2)).unwrap();
        let dist: f64 = theta.iter().zip(&before).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        // ‖ξ‖ ≈ √1000
        assert!((dist / 1e-6 / 1000f64.sqrt() - 1.0).abs() < 0.1, "{dist}");
    }

    #[test]
    fn divergence_reports_step() {
        let mut theta = vec![0.0];
        let err = langevin_step(&mut theta, &[f64::NAN], 0.1, 42, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::ChainDivergence { step: 42, .. }));
    }

    #[test]
    fn fixed_seed_gives_identical_chain_and_trace() {
        let target = DiagonalGaussian {
            mean: vec![1.0, -2.0],
            var: vec![0.5, 2.0],
        };
        let cfg = ChainConfig {
            burn_in: 100,
            total_steps: 1100,
            thinning: 10,
            step_size: 0.05,
            ..ChainConfig::default()
        };
        let mut buf = Vec::new();
        let a = run_chain(&[0.0, 0.0], &target, &cfg, &mut rng_from_seed(5), Some(&mut buf)).unwrap();
        let b = run_chain(&[0.0, 0.0], &target, &cfg, &mut rng_from_seed(5), None).unwrap();
        assert_eq!(a, b);
        let lines: Vec<ChainSample> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines, a.samples);
    }

    #[test]
    fn per_labeller_scaling_divides_step() {
        assert_eq!(sgld_step_size(0.01, 50, true), 0.01 / 50.0);
        assert_eq!(sgld_step_size(0.01, 50, false), 0.01);
        assert_eq!(sgld_step_size(0.01, 1, true), 0.01);
    }
}
