use serde::{Deserialize, Serialize};

use super::mlp::{batch_log_lik, MlpArch, MlpParams};
use super::sampler::Target;
use crate::curation::{curated_log_lik_logits, log_sum_exp, ConsensusOutcome, CuratedDataset, LikelihoodMode};
use crate::error::{invalid, Result};
use crate::gp::TemperConfig;

/// How labels enter the network's likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnnLikelihood {
    /// Single-labeller `log p_y` on consensus points; noconsensus points ignored.
    Standard,
    /// `S log p_y` on consensus points; noconsensus points ignored.
    ConsensusPower,
    /// `S log p_y` on consensus points plus `log(1 − Σ p^S)` on noconsensus points.
    Exact,
    /// `log softmax(S log p)_y` on consensus points.
    Conditional,
    /// `Σ_s log p_{y_s}` over every labeller's vote, consensus or not.
    MultiLabel,
}

impl BnnLikelihood {
    fn curated_mode(self) -> Option<LikelihoodMode> {
        match self {
            Self::Standard => Some(LikelihoodMode::Standard),
            Self::ConsensusPower => Some(LikelihoodMode::ConsensusPower),
            Self::Exact => Some(LikelihoodMode::Exact),
            Self::Conditional => Some(LikelihoodMode::Conditional),
            Self::MultiLabel => None,
        }
    }
}

/// Inputs with their consensus outcomes and, optionally, every labeller's vote.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnData {
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_labellers: usize,
    x: Vec<f64>,
    pub outcomes: Vec<ConsensusOutcome>,
    /// Every labeller's vote per point, when known.
    pub votes: Option<Vec<Vec<usize>>>,
    /// Noconsensus points whose inputs were not recorded.
    pub unobserved_noconsensus: usize,
}

impl BnnData {
    pub fn new(
        inputs: &[Vec<f64>],
        outcomes: Vec<ConsensusOutcome>,
        votes: Option<&[Vec<usize>]>,
        num_classes: usize,
        num_labellers: usize,
    ) -> Result<Self> {
        if inputs.len() != outcomes.len() {
            return Err(invalid("inputs and outcomes differ in length"));
        }
        if num_classes < 2 || num_labellers == 0 {
            return Err(invalid("need at least 2 classes and 1 labeller"));
        }
        let input_dim = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|x| x.len() != input_dim) {
            return Err(invalid("inputs have inconsistent dimensions"));
        }
        if outcomes.iter().any(|o| o.label().is_some_and(|y| y >= num_classes)) {
            return Err(invalid("label out of range"));
        }
        if let Some(v) = votes {
            if v.len() != inputs.len() {
                return Err(invalid("votes and inputs differ in length"));
            }
            if v.iter().any(|p| p.len() != num_labellers || p.iter().any(|&y| y >= num_classes)) {
                return Err(invalid("each point needs S votes within the class range"));
            }
        }
        Ok(Self {
            input_dim,
            num_classes,
            num_labellers,
            x: inputs.concat(),
            outcomes,
            votes: votes.map(<[_]>::to_vec),
            unobserved_noconsensus: 0,
        })
    }

    /// Points with recorded inputs; unrecorded noconsensus inputs are counted
    /// in `unobserved_noconsensus`. Votes are kept only if every point has them.
    pub fn from_curated(ds: &CuratedDataset) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut outcomes = Vec::new();
        let mut votes = Vec::new();
        let mut unobserved = 0;
        for p in &ds.points {
            match &p.x {
                Some(x) => {
                    inputs.push(x.clone());
                    outcomes.push(p.outcome);
                    votes.push(p.votes.clone());
                }
                None => unobserved += 1,
            }
        }
        let all_votes: Option<Vec<Vec<usize>>> = votes.into_iter().collect();
        let mut data = Self::new(
            &inputs,
            outcomes,
            all_votes.as_deref(),
            ds.num_classes,
            ds.config.num_labellers,
        )?;
        data.unobserved_noconsensus = unobserved;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// `Σ_s log p_{y_s}`, one term per labeller.
fn per_labeller_log_lik(logits: &[f64], votes: &[usize], grad: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logits.iter().copied());
    grad.iter_mut().zip(logits).for_each(|(g, l)| *g = -(votes.len() as f64) * (l - lse).exp());
    let mut ll = 0.0;
    for &y in votes {
        ll += logits[y] - lse;
        grad[y] += 1.0;
    }
    ll
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSpec {
    pub temper: TemperConfig,
    pub likelihood: BnnLikelihood,
}

/// `(1/λ) log P(y | θ) + log P(θ)`, dropping θ-independent constants.
#[derive(Debug, Clone)]
pub struct BnnPosterior<'a> {
    pub arch: MlpArch,
    pub prior_var: f64,
    pub data: &'a BnnData,
    pub spec: PosteriorSpec,
    inv_var: Vec<f64>,
    /// Points that contribute to the likelihood, when some do not.
    active: Option<Vec<usize>>,
}

impl<'a> BnnPosterior<'a> {
    pub fn new(arch: MlpArch, prior_var: f64, data: &'a BnnData, spec: PosteriorSpec) -> Result<Self> {
        arch.validate()?;
        if !(prior_var > 0.0) {
            return Err(invalid("prior variance must be positive"));
        }
        if !data.is_empty() && (data.input_dim != arch.input_dim || data.num_classes != arch.output_classes) {
            return Err(invalid("data shape does not match the network"));
        }
        if spec.likelihood == BnnLikelihood::MultiLabel && data.votes.is_none() && !data.is_empty() {
            return Err(invalid("multi-label likelihood needs raw votes"));
        }
        if spec.likelihood == BnnLikelihood::Exact && data.unobserved_noconsensus > 0 {
            return Err(invalid(
                "exact likelihood with unobserved noconsensus inputs needs the marginal over inputs",
            ));
        }
        let inv_var = arch.base_prior_variances().iter().map(|v| 1.0 / (v * prior_var)).collect();
        let ignores_noconsensus = !matches!(spec.likelihood, BnnLikelihood::Exact | BnnLikelihood::MultiLabel);
        let active = (ignores_noconsensus && data.outcomes.iter().any(|o| !o.is_consensus()))
            .then(|| (0..data.len()).filter(|&i| data.outcomes[i].is_consensus()).collect());
        Ok(Self {
            active,
            arch,
            prior_var,
            data,
            spec,
            inv_var,
        })
    }

    pub fn for_params(params: &MlpParams, data: &'a BnnData, spec: PosteriorSpec) -> Result<Self> {
        Self::new(params.arch, params.prior_var, data, spec)
    }

    pub fn log_prior(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = 0.0;
        for ((t, g), iv) in theta.iter().zip(grad.iter_mut()).zip(&self.inv_var) {
            v -= 0.5 * t * t * iv;
            *g = -t * iv;
        }
        v
    }

    /// Log-likelihood of point `i` given its logits, gradient into `dlogits`.
    fn point_log_lik(&self, i: usize, logits: &[f64], dlogits: &mut [f64]) -> f64 {
        match self.spec.likelihood.curated_mode() {
            Some(mode) => curated_log_lik_logits(logits, self.data.outcomes[i], self.data.num_labellers, mode, dlogits),
            None => {
                let votes = &self.data.votes.as_ref().expect("checked in new")[i];
                per_labeller_log_lik(logits, votes, dlogits)
            }
        }
    }

    /// Sum of log-likelihoods of `points` (all points when `None`), with the
    /// gradient scaled by `scale` added into `grad`.
    fn add_likelihood(&self, theta: &[f64], points: Option<&[usize]>, scale: f64, grad: &mut [f64]) -> f64 {
        let rows = points.or(self.active.as_deref());
        batch_log_lik(theta, &self.arch, &self.data.x, rows, |i, l, g| self.point_log_lik(i, l, g), scale, grad)
    }

    /// Untempered log-likelihood of the whole dataset.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut scratch = vec![0.0; theta.len()];
        self.add_likelihood(theta, None, 0.0, &mut scratch)
    }
}

impl Target for BnnPosterior<'_> {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    /// Returns `-∞` with an all-zero gradient when some observation is impossible.
    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let prior = self.log_prior(theta, grad);
        let ll = self.add_likelihood(theta, None, 1.0 / self.spec.temper.lambda, grad);
        if ll == f64::NEG_INFINITY {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::NEG_INFINITY;
        }
        ll / self.spec.temper.lambda + prior
    }

    fn num_points(&self) -> usize {
        self.data.len()
    }

    fn minibatch_log_density(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> f64 {
        let prior = self.log_prior(theta, grad);
        let weight = self.data.len() as f64 / batch.len() as f64;
        let ll = weight * self.add_likelihood(theta, Some(batch), weight / self.spec.temper.lambda, grad);
        if ll == f64::NEG_INFINITY {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::NEG_INFINITY;
        }
        ll / self.spec.temper.lambda + prior
    }

    fn labels_per_point(&self) -> usize {
        match self.spec.likelihood {
            BnnLikelihood::MultiLabel => self.data.num_labellers,
            _ => 1,
        }
    }
}

/// Cold log-density `(1/T) [log P(y | θ) + log P(θ)]`, with the prior scale
/// carried by `params`.
pub fn cold_log_density(params: &MlpParams, data: &BnnData, likelihood: BnnLikelihood, t: f64) -> Result<f64> {
    let spec = PosteriorSpec {
        temper: TemperConfig::new(1.0)?,
        likelihood,
    };
    let post = BnnPosterior::for_params(params, data, spec)?;
    let mut grad = vec![0.0; params.theta.len()];
    Ok((post.log_likelihood(&params.theta) + post.log_prior(&params.theta, &mut grad)) / t)
}

/// Prior scale that makes a cold posterior at temperature `t` equal to the
/// tempered posterior with `λ = t` and prior scale `sigma2_tempered`.
pub fn cold_to_tempered(sigma2_tempered: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && sigma2_tempered > 0.0) {
        return Err(invalid("temperature and prior variance must be positive"));
    }
    Ok(sigma2_tempered / t)
}
