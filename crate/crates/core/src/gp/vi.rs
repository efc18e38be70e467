//! Variational family `Q(f) ∝ P(f | x) N(v; f, Λ⁻¹)` with diagonal `Λ`, and the
//! tempered objective `E_Q[log P(y | f)] − λ KL(Q ‖ P)`.
//!
//! With `B = I + Λ^½ K Λ^½` and `A = Λ^½ B⁻¹ Λ^½ = (Λ⁻¹ + K)⁻¹`:
//!
//! ```text
//! S = (K⁻¹ + Λ)⁻¹ = K − K A K        m = S Λ v = K A v
//! KL(Q ‖ P) = ½ [ −tr(A K) + vᵀ A K A v + log|B| ]
//! ```
//!
//! so neither `K⁻¹` nor `S⁻¹` is ever formed; `B` has all eigenvalues ≥ 1.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_matrix, robust_cholesky, KernelConfig};
use super::likelihood::{LikelihoodSpec, Target};
use crate::error::{invalid, Error, Result};
use crate::optim::{minimize, OptimSettings};
use crate::rng::rng_from_seed;

/// Tempering coefficient `λ` on the KL term (equivalently `1/λ` on the likelihood).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperConfig {
    pub lambda: f64,
}

impl TemperConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("tempering coefficient must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }
}

#[derive(Debug, Clone, Default)]
pub struct GpData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Target>,
}

impl GpData {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Points that contribute to `lik`.
    pub fn restrict_to(&self, lik: &LikelihoodSpec) -> Self {
        let (inputs, targets) = self
            .inputs
            .iter()
            .zip(&self.targets)
            .filter(|(_, t)| lik.includes(**t))
            .map(|(x, t)| (x.clone(), *t))
            .unzip();
        Self { inputs, targets }
    }
}

/// Quantities shared by the objective, its gradient and prediction.
#[derive(Debug, Clone)]
struct Factor {
    /// (Λ⁻¹ + K)⁻¹
    a_mat: DMatrix<f64>,
    /// K A
    c: DMatrix<f64>,
    /// A v
    a_vec: DVector<f64>,
    mean: DVector<f64>,
    marg_var: DVector<f64>,
    log_det_b: f64,
}

impl Factor {
    fn new(k: &DMatrix<f64>, v: &DVector<f64>, log_lambda: &DVector<f64>) -> Result<Self> {
        let n = k.nrows();
        let sq = log_lambda.map(|r| (0.5 * r).exp());
        let mut b = DMatrix::from_fn(n, n, |i, j| sq[i] * k[(i, j)] * sq[j]);
        for i in 0..n {
            b[(i, i)] += 1.0;
        }
        let chol = nalgebra::Cholesky::new(b).ok_or_else(|| {
            Error::NumericalFailure("I + Λ½KΛ½ is not positive definite".into())
        })?;
        let log_det_b = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let binv = chol.inverse();
        let a_mat = DMatrix::from_fn(n, n, |i, j| sq[i] * binv[(i, j)] * sq[j]);
        let c = k * &a_mat;
        let a_vec = &a_mat * v;
        let mean = k * &a_vec;
        // diag(K − C K)
        let marg_var = DVector::from_fn(n, |i, _| {
            let reduction: f64 = (0..n).map(|j| c[(i, j)] * k[(j, i)]).sum();
            (k[(i, i)] - reduction).max(1e-300)
        });
        Ok(Self {
            a_mat,
            c,
            a_vec,
            mean,
            marg_var,
            log_det_b,
        })
    }

    fn kl(&self, k: &DMatrix<f64>) -> f64 {
        let n = k.nrows();
        let tr_ak: f64 = (0..n)
            .map(|i| (0..n).map(|j| self.a_mat[(i, j)] * k[(j, i)]).sum::<f64>())
            .sum();
        let quad = self.a_vec.dot(&self.mean);
        0.5 * (-tr_ak + quad + self.log_det_b)
    }
}

/// `(mean, covariance)` of `Q` for prior covariance `k` and diagonal precision `lambda_diag`.
pub fn variational_posterior(
    k: &DMatrix<f64>,
    v: &DVector<f64>,
    lambda_diag: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if lambda_diag.iter().any(|&l| !(l > 0.0)) {
        return Err(invalid("precision entries must be positive"));
    }
    let f = Factor::new(k, v, &lambda_diag.map(f64::ln))?;
    let cov = k - &f.c * k;
    Ok((f.mean, symmetrise(cov)))
}

fn symmetrise(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Variational parameters and cached moments of one latent function.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub v: DVector<f64>,
    pub log_lambda: DVector<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    a_mat: DMatrix<f64>,
    a_vec: DVector<f64>,
    kl: f64,
}

impl LatentPosterior {
    fn new(k: &DMatrix<f64>, v: DVector<f64>, log_lambda: DVector<f64>) -> Result<Self> {
        let f = Factor::new(k, &v, &log_lambda)?;
        let kl = f.kl(k);
        let cov = symmetrise(k - &f.c * k);
        Ok(Self {
            v,
            log_lambda,
            mean: f.mean,
            cov,
            a_mat: f.a_mat,
            a_vec: f.a_vec,
            kl,
        })
    }

    pub fn kl(&self) -> f64 {
        self.kl
    }
}

#[derive(Debug, Clone)]
pub struct GpVariationalState {
    pub train_inputs: Vec<Vec<f64>>,
    pub kernel: KernelConfig,
    /// Prior covariance at the training inputs, including jitter.
    pub k: DMatrix<f64>,
    /// Total diagonal jitter in `k`.
    pub jitter: f64,
    pub latents: Vec<LatentPosterior>,
    pub seed: u64,
}

/// Serialised form: matrices are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpStateDoc {
    pub kernel: KernelConfig,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub log_lambda: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Kernel matrix with the jitter actually needed for a Cholesky factorisation.
pub(crate) fn prior_covariance(inputs: &[Vec<f64>], kernel: &KernelConfig) -> Result<(DMatrix<f64>, f64)> {
    let mut k = kernel_matrix(inputs, kernel);
    let (_, extra) = robust_cholesky(&k, kernel.jitter.max(1e-8 * kernel.variance()))?;
    for i in 0..k.nrows() {
        k[(i, i)] += extra;
    }
    Ok((k, kernel.jitter + extra))
}

impl GpVariationalState {
    pub fn new(
        train_inputs: Vec<Vec<f64>>,
        kernel: KernelConfig,
        v: Vec<DVector<f64>>,
        log_lambda: Vec<DVector<f64>>,
        seed: u64,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = train_inputs.len();
        if v.len() != log_lambda.len() || v.is_empty() {
            return Err(invalid("need matching, non-empty v and log_lambda lists"));
        }
        if v.iter().chain(&log_lambda).any(|p| p.len() != n) {
            return Err(invalid("variational parameter length does not match inputs"));
        }
        let (k, jitter) = prior_covariance(&train_inputs, &kernel)?;
        let latents = v
            .into_iter()
            .zip(log_lambda)
            .map(|(v, l)| LatentPosterior::new(&k, v, l))
            .collect::<Result<_>>()?;
        Ok(Self {
            train_inputs,
            kernel,
            k,
            jitter,
            latents,
            seed,
        })
    }

    /// Prior as a member of the family (`Λ → 0`).
    pub fn prior(train_inputs: Vec<Vec<f64>>, kernel: KernelConfig, latent_dim: usize) -> Result<Self> {
        let n = train_inputs.len();
        Self::new(
            train_inputs,
            kernel,
            vec![DVector::zeros(n); latent_dim],
            vec![DVector::from_element(n, (1e-12f64).ln()); latent_dim],
            0,
        )
    }

    pub fn kl(&self) -> f64 {
        self.latents.iter().map(LatentPosterior::kl).sum()
    }

    pub fn to_doc(&self) -> GpStateDoc {
        GpStateDoc {
            kernel: self.kernel,
            x: self.train_inputs.clone(),
            v: self.latents.iter().map(|l| l.v.iter().copied().collect()).collect(),
            log_lambda: self
                .latents
                .iter()
                .map(|l| l.log_lambda.iter().copied().collect())
                .collect(),
            seed: self.seed,
        }
    }

    pub fn from_doc(doc: GpStateDoc) -> Result<Self> {
        Self::new(
            doc.x,
            doc.kernel,
            doc.v.into_iter().map(DVector::from_vec).collect(),
            doc.log_lambda.into_iter().map(DVector::from_vec).collect(),
            doc.seed,
        )
    }

    pub(crate) fn a_vec(&self, d: usize) -> &DVector<f64> {
        &self.latents[d].a_vec
    }

    pub(crate) fn a_mat(&self, d: usize) -> &DMatrix<f64> {
        &self.latents[d].a_mat
    }
}

/// Standard-normal draws for the reparameterised expected log-likelihood,
/// laid out `[point][draw][latent]`, in antithetic pairs.
#[derive(Debug, Clone)]
pub struct McDraws {
    n_mc: usize,
    latent_dim: usize,
    eps: Vec<f64>,
}

impl McDraws {
    pub fn new<R: Rng + ?Sized>(n_points: usize, n_mc: usize, latent_dim: usize, rng: &mut R) -> Self {
        let n_mc = n_mc.max(2).next_multiple_of(2);
        let half = n_mc / 2;
        let mut eps = vec![0.0; n_points * n_mc * latent_dim];
        for i in 0..n_points {
            for j in 0..half {
                for d in 0..latent_dim {
                    let z: f64 = rng.sample(StandardNormal);
                    eps[(i * n_mc + j) * latent_dim + d] = z;
                    eps[(i * n_mc + j + half) * latent_dim + d] = -z;
                }
            }
        }
        Self {
            n_mc,
            latent_dim,
            eps,
        }
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    pub(crate) fn draw(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n_mc + j) * self.latent_dim;
        &self.eps[start..start + self.latent_dim]
    }
}

/// Expected log-likelihood of independent Gaussian marginals `N(m[d][i], s[d][i])`,
/// with gradients w.r.t. the means and marginal variances.
pub(crate) fn expected_log_lik(
    means: &[&DVector<f64>],
    vars: &[&DVector<f64>],
    targets: &[Target],
    lik: &LikelihoodSpec,
    draws: Option<&McDraws>,
) -> (f64, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = targets.len();
    let dim = means.len();
    let mut gm = vec![DVector::zeros(n); dim];
    let mut gs = vec![DVector::zeros(n); dim];
    let mut total = 0.0;
    if let LikelihoodSpec::GaussianRegression { noise_std } = lik {
        let var = noise_std * noise_std;
        for (i, t) in targets.iter().enumerate() {
            let Target::Real(y) = *t else { continue };
            let r = y - means[0][i];
            total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (r * r + vars[0][i]) / var;
            gm[0][i] = r / var;
            gs[0][i] = -0.5 / var;
        }
        return (total, gm, gs);
    }
    let draws = draws.expect("Monte-Carlo draws required for non-conjugate likelihoods");
    let inv_m = 1.0 / draws.n_mc() as f64;
    let mut f = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for (i, &t) in targets.iter().enumerate() {
        if !lik.includes(t) {
            continue;
        }
        let sd: Vec<f64> = (0..dim).map(|d| vars[d][i].sqrt()).collect();
        for j in 0..draws.n_mc() {
            let eps = draws.draw(i, j);
            for d in 0..dim {
                f[d] = means[d][i] + sd[d] * eps[d];
            }
            let ll = lik.log_lik_grad(&f, t, &mut g);
            total += ll * inv_m;
            for d in 0..dim {
                gm[d][i] += g[d] * inv_m;
                gs[d][i] += g[d] * eps[d] / (2.0 * sd[d]) * inv_m;
            }
        }
    }
    (total, gm, gs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub expected_log_lik: f64,
    pub kl: f64,
    pub lambda: f64,
    pub elbo: f64,
}

/// The tempered objective `E_Q[log P(y|f)] − λ KL(Q‖P)`. The KL term is analytic;
/// the expected log-likelihood is closed-form for Gaussian regression and a
/// Monte-Carlo estimate (`n_mc` antithetic draws per point) otherwise.
pub fn tempered_elbo<R: Rng + ?Sized>(
    state: &GpVariationalState,
    data: &GpData,
    lik: &LikelihoodSpec,
    temper: TemperConfig,
    n_mc: usize,
    rng: &mut R,
) -> Result<ElboTerms> {
    if data.len() != state.train_inputs.len() {
        return Err(invalid("data and state have different sizes"));
    }
    let draws = (!lik.is_gaussian()).then(|| McDraws::new(data.len(), n_mc, state.latents.len(), rng));
    let means: Vec<_> = state.latents.iter().map(|l| &l.mean).collect();
    let diag: Vec<DVector<f64>> = state.latents.iter().map(|l| l.cov.diagonal()).collect();
    let vars: Vec<_> = diag.iter().collect();
    let (ell, _, _) = expected_log_lik(&means, &vars, &data.targets, lik, draws.as_ref());
    let kl = state.kl();
    let elbo = ell - temper.lambda * kl;
    if !elbo.is_finite() {
        return Err(Error::NumericalFailure(format!("ELBO is {elbo}")));
    }
    Ok(ElboTerms {
        expected_log_lik: ell,
        kl,
        lambda: temper.lambda,
        elbo,
    })
}

/// Objective and gradient w.r.t. the flat parameters `[v_1, ρ_1, v_2, ρ_2, …]`
/// (`ρ = log Λ`), for fixed Monte-Carlo draws.
pub fn elbo_and_grad(
    k: &DMatrix<f64>,
    params: &[f64],
    targets: &[Target],
    lik: &LikelihoodSpec,
    lambda: f64,
    draws: Option<&McDraws>,
) -> Result<(f64, Vec<f64>)> {
    let n = k.nrows();
    let dim = params.len() / (2 * n);
    let mut factors = Vec::with_capacity(dim);
    for d in 0..dim {
        let base = 2 * n * d;
        let v = DVector::from_column_slice(&params[base..base + n]);
        let rho = DVector::from_column_slice(&params[base + n..base + 2 * n]);
        factors.push((Factor::new(k, &v, &rho)?, rho));
    }
    let means: Vec<_> = factors.iter().map(|(f, _)| &f.mean).collect();
    let vars: Vec<_> = factors.iter().map(|(f, _)| &f.marg_var).collect();
    let (ell, gm, gs) = expected_log_lik(&means, &vars, targets, lik, draws);
    let mut value = ell;
    let mut grad = vec![0.0; params.len()];
    for (d, (f, rho)) in factors.iter().enumerate() {
        value -= lambda * f.kl(k);
        let base = 2 * n * d;
        let ct_gm = f.c.tr_mul(&gm[d]); // A K g_m
        let a_m = &f.a_mat * &f.mean;
        for j in 0..n {
            grad[base + j] = ct_gm[j] - lambda * a_m[j];
        }
        for j in 0..n {
            let dj = (-rho[j]).exp();
            let mut akajj = 0.0;
            let mut s_term = 0.0;
            for i in 0..n {
                let cij = f.c[(i, j)];
                akajj += f.a_mat[(i, j)] * cij;
                s_term += gs[d][i] * cij * cij;
            }
            let d_ell = dj * f.a_vec[j] * ct_gm[j] - dj * s_term;
            let d_kl = 0.5
                * (-dj * akajj + 2.0 * f.a_vec[j] * dj * a_m[j] - f.a_mat[(j, j)] * dj + 1.0);
            grad[base + n + j] = d_ell - lambda * d_kl;
        }
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub optim: OptimSettings,
    /// Monte-Carlo draws per point while fitting (fixed for the whole fit).
    pub n_mc_fit: usize,
    /// Monte-Carlo draws per point for final evaluation and prediction.
    pub n_mc_eval: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            optim: OptimSettings::default(),
            n_mc_fit: 64,
            n_mc_eval: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Maximises the tempered ELBO over `(v, log Λ)` for every latent function.
/// Points the likelihood ignores (e.g. noconsensus points under the standard
/// curated mode) are dropped before fitting.
pub fn fit_vi(
    data: &GpData,
    kernel: &KernelConfig,
    lik: &LikelihoodSpec,
    temper: TemperConfig,
    settings: &FitSettings,
    seed: u64,
) -> Result<(GpVariationalState, FitReport)> {
    lik.validate()?;
    let data = data.restrict_to(lik);
    if data.is_empty() {
        return Err(invalid("no data points contribute to the likelihood"));
    }
    let n = data.len();
    let dim = lik.latent_dim();
    let (k, _) = prior_covariance(&data.inputs, kernel)?;
    let mut rng = rng_from_seed(seed);
    let draws = (!lik.is_gaussian()).then(|| McDraws::new(n, settings.n_mc_fit, dim, &mut rng));
    let nan_at: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let objective = |p: &[f64]| match elbo_and_grad(&k, p, &data.targets, lik, temper.lambda, draws.as_ref()) {
        Ok((v, g)) if !v.is_nan() => (-v, g.into_iter().map(|x| -x).collect()),
        _ => {
            nan_at.borrow_mut().get_or_insert_with(|| p.to_vec());
            (f64::NAN, vec![0.0; p.len()])
        }
    };
    let init = vec![0.0; 2 * n * dim];
    let report = minimize(&objective, init, &settings.optim)?;
    if !report.converged {
        if let Some(p) = nan_at.borrow().as_ref() {
            return Err(Error::NumericalFailure(format!(
                "ELBO became NaN during fitting; iterate: {p:?}"
            )));
        }
    }
    let (v, log_lambda): (Vec<_>, Vec<_>) = (0..dim)
        .map(|d| {
            let base = 2 * n * d;
            (
                DVector::from_column_slice(&report.param[base..base + n]),
                DVector::from_column_slice(&report.param[base + n..base + 2 * n]),
            )
        })
        .unzip();
    let state = GpVariationalState::new(data.inputs.clone(), *kernel, v, log_lambda, seed)?;
    Ok((
        state,
        FitReport {
            objective: -report.value,
            grad_norm: report.grad_norm,
            iterations: report.iterations,
            converged: report.converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::{ConsensusOutcome, CurationConfig, LikelihoodMode};
    use crate::gp::kernel::se_kernel;

    fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
        m.clone().try_inverse().unwrap()
    }

    #[test]
    fn scalar_posterior() {
        let k = DMatrix::from_element(1, 1, 4.0);
        let (m, s) = variational_posterior(&k, &DVector::from_element(1, 2.0), &DVector::from_element(1, 1.0)).unwrap();
        assert!((s[(0, 0)] - 0.8).abs() < 1e-14);
        assert!((m[0] - 1.6).abs() < 1e-14);
    }

    #[test]
    fn vanishing_precision_recovers_prior() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.7]).collect();
        let k = kernel_matrix(&x, &KernelConfig::default());
        let v = DVector::from_fn(6, |i, _| i as f64);
        let (m, s) = variational_posterior(&k, &v, &DVector::from_element(6, 1e-12)).unwrap();
        assert!(m.amax() < 1e-6);
        assert!((s - &k).amax() < 1e-6);
        assert!(variational_posterior(&k, &v, &DVector::from_element(6, 0.0)).is_err());
    }

    #[test]
    fn matches_dense_formula() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.9 - 2.0]).collect();
        let k = kernel_matrix(&x, &KernelConfig::default());
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, 0.0]);
        let lam = DVector::from_vec(vec![0.5, 2.0, 1.0, 0.1, 3.0]);
        let (m, s) = variational_posterior(&k, &v, &lam).unwrap();
        let s_dense = dense_inverse(&(dense_inverse(&k) + DMatrix::from_diagonal(&lam)));
        let m_dense = &s_dense * DMatrix::from_diagonal(&lam) * &v;
        assert!((&s - &s_dense).amax() < 1e-6 * s_dense.amax());
        assert!((&m - &m_dense).amax() < 1e-6 * m_dense.amax().max(1.0));
    }

    #[test]
    fn kl_of_prior_is_zero_and_tempering_is_linear() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let state = GpVariationalState::prior(x.clone(), KernelConfig::default(), 1).unwrap();
        assert!(state.kl().abs() < 1e-8);

        let data = GpData {
            inputs: x.clone(),
            targets: (0..8).map(|i| Target::Real(i as f64 * 0.1)).collect(),
        };
        let lik = LikelihoodSpec::GaussianRegression { noise_std: 1.0 };
        let fitted = GpVariationalState::new(
            x,
            KernelConfig::default(),
            vec![DVector::from_element(8, 1.0)],
            vec![DVector::from_element(8, 0.0)],
            0,
        )
        .unwrap();
        let mut rng = rng_from_seed(0);
        let one = tempered_elbo(&fitted, &data, &lik, TemperConfig::new(1.0).unwrap(), 1, &mut rng).unwrap();
        let two = tempered_elbo(&fitted, &data, &lik, TemperConfig::new(2.0).unwrap(), 1, &mut rng).unwrap();
        let penalty = |t: ElboTerms| t.expected_log_lik - t.elbo;
        assert!((penalty(two) - 2.0 * penalty(one)).abs() < 1e-12);
        assert!(TemperConfig::new(0.0).is_err());
    }

    fn gaussian_log_evidence(k: &DMatrix<f64>, y: &DVector<f64>, noise_var: f64) -> f64 {
        let n = y.len();
        let c = k + DMatrix::identity(n, n) * noise_var;
        let chol = c.cholesky().unwrap();
        let alpha = chol.solve(y);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn elbo_at_exact_posterior_equals_evidence() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![-5.0 + i as f64 * 0.8]).collect();
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.5).sin() * 3.0);
        let kernel = KernelConfig::default();
        let state = GpVariationalState::new(
            x.clone(),
            kernel,
            vec![y.clone()],
            vec![DVector::zeros(12)], // Λ = 1/σ² with σ = 1
            0,
        )
        .unwrap();
        let data = GpData {
            inputs: x,
            targets: y.iter().map(|&v| Target::Real(v)).collect(),
        };
        let lik = LikelihoodSpec::GaussianRegression { noise_std: 1.0 };
        let elbo = tempered_elbo(&state, &data, &lik, TemperConfig::new(1.0).unwrap(), 1, &mut rng_from_seed(0))
            .unwrap()
            .elbo;
        let evidence = gaussian_log_evidence(&state.k, &y, 1.0);
        assert!((elbo - evidence).abs() < 1e-6, "{elbo} vs {evidence}");
    }

    #[test]
    fn fit_recovers_conjugate_posterior() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![-7.0 + i as f64]).collect();
        let y: Vec<f64> = (0..15).map(|i| (i as f64 * 0.4).cos() * 2.0).collect();
        let data = GpData {
            inputs: x.clone(),
            targets: y.iter().map(|&v| Target::Real(v)).collect(),
        };
        let kernel = KernelConfig::default();
        let noise = 0.7;
        let lik = LikelihoodSpec::GaussianRegression { noise_std: noise };
        let (state, report) = fit_vi(&data, &kernel, &lik, TemperConfig::new(1.0).unwrap(), &FitSettings::default(), 3).unwrap();
        assert!(report.converged, "{report:?}");
        let k = &state.k;
        let noise_var = noise * noise;
        let c = k + DMatrix::identity(15, 15) * noise_var;
        let cinv = dense_inverse(&c);
        let m_exact = k * &cinv * DVector::from_vec(y);
        let s_exact = k - k * &cinv * k;
        let lat = &state.latents[0];
        assert!((&lat.mean - &m_exact).amax() < 1e-4);
        assert!((&lat.cov - &s_exact).amax() < 1e-4);
        // determinism
        let (again, _) = fit_vi(&data, &kernel, &lik, TemperConfig::new(1.0).unwrap(), &FitSettings::default(), 3).unwrap();
        assert_eq!(again.latents[0].v, lat.v);
        assert_eq!(again.latents[0].log_lambda, lat.log_lambda);
    }

    #[test]
    fn single_positive_bernoulli_point_pulls_mean_up() {
        let data = GpData {
            inputs: vec![vec![0.0]],
            targets: vec![Target::Outcome(ConsensusOutcome::Label(1))],
        };
        let (state, _) = fit_vi(
            &data,
            &KernelConfig::default(),
            &LikelihoodSpec::BernoulliSigmoid,
            TemperConfig::new(1.0).unwrap(),
            &FitSettings::default(),
            1,
        )
        .unwrap();
        assert!(state.latents[0].mean[0] > 0.0);
    }

    #[test]
    fn fit_rejects_empty_data() {
        let lik = LikelihoodSpec::Curated {
            inner: Box::new(LikelihoodSpec::BernoulliSigmoid),
            config: CurationConfig::new(3, true).unwrap(),
            mode: LikelihoodMode::Standard,
        };
        let data = GpData {
            inputs: vec![vec![0.0]],
            targets: vec![Target::Outcome(ConsensusOutcome::NoConsensus)],
        };
        let r = fit_vi(&data, &KernelConfig::default(), &lik, TemperConfig::new(1.0).unwrap(), &FitSettings::default(), 0);
        assert!(r.is_err());
    }

    #[test]
    fn state_json_round_trip() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let state = GpVariationalState::new(
            x,
            KernelConfig::default(),
            vec![DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4])],
            vec![DVector::from_vec(vec![0.0, -1.0, 1.0, 0.5])],
            42,
        )
        .unwrap();
        let text = serde_json::to_string(&state.to_doc()).unwrap();
        assert!(!text.contains("cov"));
        let back = GpVariationalState::from_doc(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.latents[0].mean, state.latents[0].mean);
        assert_eq!(back.seed, 42);
        let _ = se_kernel(&back.train_inputs, &back.train_inputs, &back.kernel);
    }
}
