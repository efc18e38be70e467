use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest diagonal jitter tried before a Cholesky factorisation is declared failed.
pub const MAX_JITTER: f64 = 1e-2;

/// Squared-exponential kernel `σ² exp(-‖x - x'‖² / (2ℓ²))`.
///
/// `bandwidth` is the lengthscale `ℓ` in that expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub signal_std: f64,
    pub bandwidth: f64,
    /// Initial diagonal stabiliser; escalated ×10 up to [`MAX_JITTER`].
    pub jitter: f64,
}

impl KernelConfig {
    pub fn new(signal_std: f64, bandwidth: f64) -> Result<Self> {
        let cfg = Self {
            signal_std,
            bandwidth,
            jitter: 1e-8 * signal_std * signal_std,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_std > 0.0 && self.bandwidth > 0.0 && self.jitter >= 0.0) {
            return Err(invalid(format!("invalid kernel config {self:?}")));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.variance() * (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

impl Default for KernelConfig {
    /// Signal std 4 and bandwidth 1.
    fn default() -> Self {
        Self::new(4.0, 1.0).expect("valid default kernel")
    }
}

/// Cross-covariance `k(x1[i], x2[j])`, no jitter.
pub fn se_kernel(x1: &[Vec<f64>], x2: &[Vec<f64>], config: &KernelConfig) -> DMatrix<f64> {
    DMatrix::from_fn(x1.len(), x2.len(), |i, j| config.eval(&x1[i], &x2[j]))
}

/// Gram matrix of `x` with the configured jitter added to the diagonal.
pub fn kernel_matrix(x: &[Vec<f64>], config: &KernelConfig) -> DMatrix<f64> {
    let mut k = se_kernel(x, x, config);
    for i in 0..x.len() {
        k[(i, i)] += config.jitter;
    }
    k
}

/// Cholesky factorisation of `m`, adding diagonal jitter ×10 at a time (starting
/// at `start`) until it succeeds or exceeds [`MAX_JITTER`]. Returns the factor and
/// the extra jitter that was needed.
pub fn robust_cholesky(m: &DMatrix<f64>, start: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = start.max(1e-12);
    while jitter <= MAX_JITTER * (1.0 + 1e-12) {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalFailure(format!(
        "Cholesky failed for a {n}×{n} matrix even with jitter {MAX_JITTER}",
        n = m.nrows()
    )))
}

/// Draw `f ~ N(0, K)`.
pub fn sample_prior_function<R: Rng + ?Sized>(k: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let n = k.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = k.diagonal().max().abs().max(1.0);
    let (chol, _) = robust_cholesky(k, 1e-10 * scale)?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(chol.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn kernel_examples() {
        let cfg = KernelConfig::new(4.0, 1.0).unwrap();
        let x = vec![vec![0.0]];
        assert_eq!(se_kernel(&x, &x, &cfg)[(0, 0)], 16.0);
        assert!((kernel_matrix(&x, &cfg)[(0, 0)] - 16.0 - 16e-8).abs() < 1e-15);
        let k = se_kernel(&[vec![0.0]], &[vec![1.0]], &cfg)[(0, 0)];
        assert!((k - 16.0 * (-0.5f64).exp()).abs() < 1e-14);
        let far = se_kernel(&[vec![0.0]], &[vec![60.0]], &cfg)[(0, 0)];
        assert!(far < 1e-300);
        assert!(KernelConfig::new(0.0, 1.0).is_err());
        assert!(KernelConfig::new(1.0, -1.0).is_err());
    }

    #[test]
    fn prior_samples_have_identity_moments() {
        let k = DMatrix::<f64>::identity(3, 3);
        let mut rng = rng_from_seed(17);
        let n = 100_000;
        let mut sum = DVector::<f64>::zeros(3);
        let mut sq = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let f = sample_prior_function(&k, &mut rng).unwrap();
            sum += &f;
            sq += f.component_mul(&f);
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.01, "{mean}");
            assert!((var - 1.0).abs() < 0.02, "{var}");
        }
    }

    #[test]
    fn prior_sampling_edge_cases() {
        let mut rng = rng_from_seed(1);
        assert_eq!(sample_prior_function(&DMatrix::zeros(0, 0), &mut rng).unwrap().len(), 0);
        let k = kernel_matrix(&[vec![0.0], vec![0.5], vec![1.0]], &KernelConfig::default());
        let a = sample_prior_function(&k, &mut rng_from_seed(4)).unwrap();
        let b = sample_prior_function(&k, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]);
        assert!(sample_prior_function(&indefinite, &mut rng).is_err());
    }

    #[test]
    fn jitter_escalation_rescues_duplicate_inputs() {
        let cfg = KernelConfig { jitter: 0.0, ..KernelConfig::default() };
        let x = vec![vec![1.0]; 4];
        let k = kernel_matrix(&x, &cfg);
        let (_, used) = robust_cholesky(&k, 1e-8 * cfg.variance()).unwrap();
        assert!(used > 0.0 && used <= MAX_JITTER);
    }
}
