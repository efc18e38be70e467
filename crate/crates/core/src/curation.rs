//! Consensus-formation model of dataset curation.
//!
//! A point is drawn, `S` labellers each draw a label IID from the single-labeller
//! distribution `p(y | x, θ)`, and the point receives a label only when all of them
//! agree. The observed outcome therefore lives in `𝒴 ∪ {None}` with
//!
//! ```text
//! P(Y = y)    = p_y^S
//! P(Y = None) = 1 - Σ_k p_k^S
//! P(Y = y | Y ≠ None) = p_y^S / Σ_k p_k^S
//! ```
//!
//! All likelihood math is done in log space. `1 - Σ_k p_k^S` is evaluated as
//! `-expm1(S·log p_max) - Σ_{k≠max} p_k^S` with `log p_max = log1p(-Σ_{k≠max} p_k)`,
//! which keeps full relative precision when one class is nearly certain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on `Σ p = 1`: renormalised silently below it, rejected above.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Per-class probabilities of a single labeller, `p(Y_s = y | x, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs(Vec<f64>);

impl ClassProbs {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(invalid(format!(
                "class probabilities need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid(format!("probability {p} outside [0, 1]")));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Self(probs))
    }

    /// Softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut out = vec![0.0; logits.len()];
        log_softmax(logits, &mut out);
        out.iter_mut().for_each(|l| *l = l.exp());
        Self(out)
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, y: usize) -> f64 {
        self.0[y]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Observed label `Y`: a class when all labellers agree, otherwise `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConsensusOutcome {
    Label(usize),
    NoConsensus,
}

impl ConsensusOutcome {
    pub fn label(self) -> Option<usize> {
        match self {
            Self::Label(y) => Some(y),
            Self::NoConsensus => None,
        }
    }

    pub fn is_consensus(self) -> bool {
        matches!(self, Self::Label(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Number of IID labellers per point, `S`.
    #[serde(rename = "S")]
    pub num_labellers: usize,
    /// Whether inputs of rejected points are retained (`Z = X`) or dropped
    /// (`Z = None`).
    pub keep_noconsensus_inputs: bool,
}

impl CurationConfig {
    pub fn new(num_labellers: usize, keep_noconsensus_inputs: bool) -> Result<Self> {
        if num_labellers == 0 {
            return Err(invalid("number of labellers must be at least 1"));
        }
        Ok(Self {
            num_labellers,
            keep_noconsensus_inputs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub noise_prob: f64,
}

impl NoiseConfig {
    pub fn new(noise_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise_prob) {
            return Err(invalid(format!("noise probability {noise_prob} outside [0, 1]")));
        }
        Ok(Self { noise_prob })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedPoint {
    /// `None` encodes an unobserved input (`Z = None`).
    pub x: Option<Vec<f64>>,
    pub outcome: ConsensusOutcome,
    pub votes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedDataset {
    pub config: CurationConfig,
    pub num_classes: usize,
    pub seed: u64,
    pub points: Vec<CuratedPoint>,
}

impl CuratedDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn consensus_points(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.points.iter().filter_map(|p| match (&p.x, p.outcome) {
            (Some(x), ConsensusOutcome::Label(y)) => Some((x.as_slice(), y)),
            _ => None,
        })
    }

    pub fn noconsensus_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let n = self
            .points
            .iter()
            .filter(|p| !p.outcome.is_consensus())
            .count();
        n as f64 / self.points.len() as f64
    }

    /// Checks the stored invariants: labels in range, votes reproduce outcomes,
    /// and inputs are absent exactly where the curation config says they must be.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if let ConsensusOutcome::Label(y) = p.outcome {
                if y >= self.num_classes {
                    return Err(invalid(format!("point {i}: label {y} out of range")));
                }
                if p.x.is_none() {
                    return Err(invalid(format!("point {i}: labelled point without input")));
                }
            }
            if let Some(votes) = &p.votes {
                if consensus_outcome(votes)? != p.outcome {
                    return Err(invalid(format!("point {i}: votes disagree with outcome")));
                }
            }
            if !self.config.keep_noconsensus_inputs
                && !p.outcome.is_consensus()
                && p.x.is_some()
            {
                return Err(invalid(format!(
                    "point {i}: noconsensus input present although inputs are not kept"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(text)?;
        let ds = Self::try_from(doc)?;
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    config: CurationConfig,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    points: Vec<PointDoc>,
}

#[derive(Serialize, Deserialize)]
struct PointDoc {
    x: Option<Vec<f64>>,
    y: Option<usize>,
    votes: Option<Vec<usize>>,
}

impl From<&CuratedDataset> for DatasetDoc {
    fn from(ds: &CuratedDataset) -> Self {
        Self {
            config: ds.config,
            seed: ds.seed,
            num_classes: Some(ds.num_classes),
            points: ds
                .points
                .iter()
                .map(|p| PointDoc {
                    x: p.x.clone(),
                    y: p.outcome.label(),
                    votes: p.votes.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<DatasetDoc> for CuratedDataset {
    type Error = Error;

    fn try_from(doc: DatasetDoc) -> Result<Self> {
        if doc.config.num_labellers == 0 {
            return Err(invalid("S must be at least 1"));
        }
        let observed = doc
            .points
            .iter()
            .flat_map(|p| p.y.into_iter().chain(p.votes.iter().flatten().copied()))
            .max()
            .map_or(2, |m| (m + 1).max(2));
        let num_classes = doc.num_classes.unwrap_or(observed);
        let points = doc
            .points
            .into_iter()
            .map(|p| {
                if p.x.is_none() && p.y.is_some() {
                    return Err(invalid("a labelled point must carry its input"));
                }
                Ok(CuratedPoint {
                    outcome: p.y.map_or(ConsensusOutcome::NoConsensus, ConsensusOutcome::Label),
                    x: p.x,
                    votes: p.votes,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: doc.config,
            num_classes,
            seed: doc.seed,
            points,
        })
    }
}

/// Which per-point likelihood to use on a curated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMode {
    /// `S·log p_y` on consensus points plus `log(1 - Σ p^S)` on noconsensus points.
    Exact,
    /// `S·log p_y` on consensus points only.
    ConsensusPower,
    /// Single-labeller `log p_y` on consensus points only.
    Standard,
    /// Consensus-conditioned `log(p_y^S / Σ p^S)` on consensus points only.
    Conditional,
}

impl LikelihoodMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::ConsensusPower => "consensus-power",
            Self::Standard => "standard",
            Self::Conditional => "conditional",
        }
    }

    pub fn uses_noconsensus(self) -> bool {
        self == Self::Exact
    }
}

pub fn consensus_outcome(votes: &[usize]) -> Result<ConsensusOutcome> {
    let (&first, rest) = votes
        .split_first()
        .ok_or_else(|| invalid("empty vote tuple"))?;
    Ok(if rest.iter().all(|&v| v == first) {
        ConsensusOutcome::Label(first)
    } else {
        ConsensusOutcome::NoConsensus
    })
}

pub fn consensus_class_log_prob(probs: &ClassProbs, y: usize, s: usize) -> f64 {
    let p = probs.get(y);
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    s as f64 * p.ln()
}

pub fn consensus_prob(probs: &ClassProbs, s: usize) -> f64 {
    let s = s as f64;
    neumaier_sum(probs.as_slice().iter().map(|&p| pow_via_log(p, s)))
}

pub fn noconsensus_log_prob(probs: &ClassProbs, s: usize) -> f64 {
    if s <= 1 {
        return f64::NEG_INFINITY;
    }
    let p = probs.as_slice();
    let top = argmax(p);
    let rest = neumaier_sum(p.iter().enumerate().filter(|&(k, _)| k != top).map(|(_, &v)| v));
    let log_top = (-rest).ln_1p();
    noconsensus_from_parts(
        log_top,
        p.iter()
            .enumerate()
            .filter(|&(k, _)| k != top)
            .map(|(_, &v)| v.ln()),
        s as f64,
    )
}

/// `log(1 - exp(s·log_top) - Σ exp(s·log_other))`, clamped to `-∞` when the
/// bracket is not positive.
fn noconsensus_from_parts(log_top: f64, log_others: impl Iterator<Item = f64>, s: f64) -> f64 {
    let head = -(s * log_top).exp_m1();
    let tail = neumaier_sum(log_others.map(|l| (s * l).exp()));
    let v = head - tail;
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub fn conditional_consensus_probs(probs: &ClassProbs, s: usize) -> Result<ClassProbs> {
    if probs.as_slice().iter().all(|&p| p == 0.0) {
        return Err(invalid("all-zero class probabilities"));
    }
    let s = s as f64;
    let scaled: Vec<f64> = probs.as_slice().iter().map(|&p| s * p.ln()).collect();
    Ok(ClassProbs::from_logits(&scaled))
}

/// Draws `n_points` inputs, `S` IID labels per input, and applies the consensus rule.
pub fn simulate_curation<R, G, F>(
    mut input_generator: G,
    true_class_prob_fn: F,
    config: CurationConfig,
    n_points: usize,
    seed: u64,
    rng: &mut R,
) -> Result<CuratedDataset>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Vec<f64>>,
    F: Fn(&[f64]) -> ClassProbs,
{
    if n_points == 0 {
        return Err(invalid("n_points must be at least 1"));
    }
    if config.num_labellers == 0 {
        return Err(invalid("S must be at least 1"));
    }
    let mut points = Vec::with_capacity(n_points);
    let mut num_classes = 0;
    for _ in 0..n_points {
        let x = input_generator(rng)?;
        let probs = true_class_prob_fn(&x);
        num_classes = probs.num_classes();
        let votes: Vec<usize> = (0..config.num_labellers)
            .map(|_| sample_class(&probs, rng))
            .collect();
        let outcome = consensus_outcome(&votes)?;
        let x = (outcome.is_consensus() || config.keep_noconsensus_inputs).then_some(x);
        points.push(CuratedPoint {
            x,
            outcome,
            votes: Some(votes),
        });
    }
    Ok(CuratedDataset {
        config,
        num_classes,
        seed,
        points,
    })
}

pub fn sample_class<R: Rng + ?Sized>(probs: &ClassProbs, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.as_slice().iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs
        .as_slice()
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.num_classes() - 1)
}

/// Sum of per-point log-likelihoods under `mode`. Returns `-∞` rather than an
/// error for impossible observations (e.g. a noconsensus point with `S = 1`).
pub fn curated_log_lik(
    dataset: &CuratedDataset,
    per_point_probs: &[ClassProbs],
    mode: LikelihoodMode,
) -> Result<f64> {
    if per_point_probs.len() != dataset.len() {
        return Err(invalid(format!(
            "{} probability vectors for {} points",
            per_point_probs.len(),
            dataset.len()
        )));
    }
    let s = dataset.config.num_labellers;
    let mut total = 0.0;
    for (i, (point, probs)) in dataset.points.iter().zip(per_point_probs).enumerate() {
        total += match (point.outcome, mode) {
            (ConsensusOutcome::Label(y), LikelihoodMode::Exact | LikelihoodMode::ConsensusPower) => {
                consensus_class_log_prob(probs, y, s)
            }
            (ConsensusOutcome::Label(y), LikelihoodMode::Standard) => probs.get(y).ln(),
            (ConsensusOutcome::Label(y), LikelihoodMode::Conditional) => {
                conditional_consensus_probs(probs, s)?.get(y).ln()
            }
            (ConsensusOutcome::NoConsensus, LikelihoodMode::Exact) => {
                if point.x.is_none() {
                    return Err(invalid(format!(
                        "point {i}: exact likelihood of an unobserved noconsensus input needs \
                         the marginal over inputs (see estimate_noconsensus_marginal)"
                    )));
                }
                noconsensus_log_prob(probs, s)
            }
            (ConsensusOutcome::NoConsensus, _) => 0.0,
        };
    }
    Ok(total)
}

/// Monte-Carlo estimate of `∫ P(X) (1 - Σ_y p(y|X,θ)^S) dX` for a known input law.
pub fn estimate_noconsensus_marginal<R, G, F>(
    mut input_generator: G,
    class_prob_fn: F,
    s: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Vec<f64>>,
    F: Fn(&[f64]) -> ClassProbs,
{
    if n_mc == 0 {
        return Err(invalid("n_mc must be at least 1"));
    }
    let mut total = 0.0;
    for _ in 0..n_mc {
        let x = input_generator(rng)?;
        total += noconsensus_log_prob(&class_prob_fn(&x), s).exp();
    }
    Ok(total / n_mc as f64)
}

/// Replaces each consensus label, with probability `p`, by a uniform draw over
/// all classes (which may return the original class). Votes of replaced points
/// are dropped since they no longer explain the stored label.
pub fn corrupt_labels<R: Rng + ?Sized>(
    dataset: &CuratedDataset,
    noise: NoiseConfig,
    rng: &mut R,
) -> Result<CuratedDataset> {
    if !dataset.points.iter().any(|p| p.outcome.is_consensus()) {
        return Err(invalid("no labelled points to corrupt"));
    }
    let mut out = dataset.clone();
    for point in &mut out.points {
        if let ConsensusOutcome::Label(_) = point.outcome {
            if rng.random::<f64>() < noise.noise_prob {
                point.outcome = ConsensusOutcome::Label(rng.random_range(0..dataset.num_classes));
                point.votes = None;
            }
        }
    }
    Ok(out)
}

/// Per-point curated log-likelihood as a function of the logits, with its
/// gradient written into `grad` (same length as `logits`).
pub fn curated_log_lik_logits(
    logits: &[f64],
    outcome: ConsensusOutcome,
    s: usize,
    mode: LikelihoodMode,
    grad: &mut [f64],
) -> f64 {
    let k = logits.len();
    debug_assert_eq!(grad.len(), k);
    match (outcome, mode) {
        (ConsensusOutcome::Label(y), LikelihoodMode::Standard | LikelihoodMode::Exact | LikelihoodMode::ConsensusPower) => {
            let w = if mode == LikelihoodMode::Standard { 1.0 } else { s as f64 };
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (g, &l) in grad.iter_mut().zip(logits) {
                *g = (l - m).exp();
                sum += *g;
            }
            for (c, g) in grad.iter_mut().enumerate() {
                *g = w * (f64::from(u8::from(c == y)) - *g / sum);
            }
            return w * (logits[y] - m - sum.ln());
        }
        (ConsensusOutcome::NoConsensus, mode) if mode != LikelihoodMode::Exact => {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        _ => {}
    }
    let mut logp = [0.0; 16];
    let mut heap;
    let logp: &mut [f64] = if k <= 16 {
        &mut logp[..k]
    } else {
        heap = vec![0.0; k];
        &mut heap
    };
    log_softmax(logits, logp);
    let sf = s as f64;
    match (outcome, mode) {
        (ConsensusOutcome::Label(y), LikelihoodMode::Standard) => {
            for c in 0..k {
                grad[c] = f64::from(u8::from(c == y)) - logp[c].exp();
            }
            logp[y]
        }
        (ConsensusOutcome::Label(y), LikelihoodMode::Exact | LikelihoodMode::ConsensusPower) => {
            for c in 0..k {
                grad[c] = sf * (f64::from(u8::from(c == y)) - logp[c].exp());
            }
            sf * logp[y]
        }
        (ConsensusOutcome::Label(y), LikelihoodMode::Conditional) => {
            // q = softmax(S·log p); d/dlogits = S (e_y − q)
            let lse = log_sum_exp(logp.iter().map(|&l| sf * l));
            for c in 0..k {
                let q = (sf * logp[c] - lse).exp();
                grad[c] = sf * (f64::from(u8::from(c == y)) - q);
            }
            sf * logp[y] - lse
        }
        (ConsensusOutcome::NoConsensus, LikelihoodMode::Exact) => {
            if s <= 1 {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return f64::NEG_INFINITY;
            }
            let top = argmax(logp);
            let rest = neumaier_sum((0..k).filter(|&c| c != top).map(|c| logp[c].exp()));
            let log_top = (-rest).ln_1p();
            let value = noconsensus_from_parts(
                log_top,
                (0..k).filter(|&c| c != top).map(|c| logp[c]),
                sf,
            );
            // d log(1−c) = −S (Σ_k p_k^S (e_k − p)) / (1 − c)
            let one_minus_c = value.exp();
            let pow: Vec<f64> = (0..k)
                .map(|c| if c == top { (sf * log_top).exp() } else { (sf * logp[c]).exp() })
                .collect();
            let c_total: f64 = pow.iter().sum();
            for c in 0..k {
                let p = if c == top { log_top.exp() } else { logp[c].exp() };
                grad[c] = if one_minus_c > 0.0 {
                    -sf * (pow[c] - c_total * p) / one_minus_c
                } else {
                    0.0
                };
            }
            value
        }
        (ConsensusOutcome::NoConsensus, _) => {
            grad.iter_mut().for_each(|g| *g = 0.0);
            0.0
        }
    }
}

/// `Σ_k n_k log p_k` for per-class vote counts, gradient `n − N p`.
pub fn vote_counts_log_lik_logits(logits: &[f64], counts: &[f64], grad: &mut [f64]) -> f64 {
    let k = logits.len();
    let lse = log_sum_exp(logits.iter().copied());
    let total: f64 = counts.iter().sum();
    let mut ll = 0.0;
    for c in 0..k {
        let logp = logits[c] - lse;
        if counts[c] > 0.0 {
            ll += counts[c] * logp;
        }
        grad[c] = counts[c] - total * logp.exp();
    }
    ll
}

pub(crate) fn log_softmax(logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits.iter().copied());
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn pow_via_log(p: f64, s: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        (s * p.ln()).exp()
    }
}

/// Compensated (Neumaier) summation.
pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn cp(v: &[f64]) -> ClassProbs {
        ClassProbs::new(v.to_vec()).unwrap()
    }

    #[test]
    fn outcome_examples() {
        let (cat, dog) = (0, 1);
        assert_eq!(
            consensus_outcome(&[cat, cat, cat]).unwrap(),
            ConsensusOutcome::Label(cat)
        );
        assert_eq!(
            consensus_outcome(&[cat, cat, dog]).unwrap(),
            ConsensusOutcome::NoConsensus
        );
        assert_eq!(consensus_outcome(&[dog]).unwrap(), ConsensusOutcome::Label(dog));
        assert!(consensus_outcome(&[]).is_err());
    }

    #[test]
    fn class_probs_validation() {
        assert!(ClassProbs::new(vec![1.0]).is_err());
        assert!(ClassProbs::new(vec![0.6, 0.6]).is_err());
        assert!(ClassProbs::new(vec![-0.1, 1.1]).is_err());
        let p = ClassProbs::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert_eq!(p.as_slice().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn consensus_log_prob_examples() {
        assert_eq!(consensus_class_log_prob(&cp(&[1.0, 0.0]), 0, 5), 0.0);
        assert!((consensus_class_log_prob(&cp(&[0.8, 0.2]), 0, 3) - 0.512f64.ln()).abs() < 1e-14);
        assert_eq!(
            consensus_class_log_prob(&cp(&[1.0, 0.0]), 1, 3),
            f64::NEG_INFINITY
        );
        let p = cp(&[0.3, 0.7]);
        assert!((consensus_class_log_prob(&p, 1, 1) - 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn consensus_prob_examples() {
        assert!((consensus_prob(&cp(&[0.3, 0.2, 0.5]), 1) - 1.0).abs() < 1e-15);
        assert!((consensus_prob(&cp(&[0.8, 0.2]), 3) - 0.520).abs() < 1e-14);
        assert!((consensus_prob(&cp(&[0.5, 0.5]), 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noconsensus_examples() {
        assert_eq!(noconsensus_log_prob(&cp(&[0.3, 0.7]), 1), f64::NEG_INFINITY);
        assert!((noconsensus_log_prob(&cp(&[0.8, 0.2]), 3) - 0.48f64.ln()).abs() < 1e-13);
        assert!((noconsensus_log_prob(&cp(&[0.5, 0.5]), 2) - 0.5f64.ln()).abs() < 1e-14);
        assert_eq!(noconsensus_log_prob(&cp(&[1.0, 0.0]), 4), f64::NEG_INFINITY);
    }

    #[test]
    fn noconsensus_keeps_precision_near_certainty() {
        // p = (1 - 1e-12, 1e-12), S = 3: 1 - p^3 - q^3 ≈ 3e-12
        let logits = [0.0, -(1e12f64).ln()];
        let mut g = [0.0; 2];
        let v = curated_log_lik_logits(&logits, ConsensusOutcome::NoConsensus, 3, LikelihoodMode::Exact, &mut g);
        let q: f64 = 1.0 / (1.0 + 1e12);
        let expected = (3.0 * q * (1.0 - q) * (1.0 - q) + 3.0 * q * q * (1.0 - q)).ln();
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
    }

    #[test]
    fn conditional_examples() {
        let u = ClassProbs::uniform(4);
        for s in 1..6 {
            let q = conditional_consensus_probs(&u, s).unwrap();
            for &v in q.as_slice() {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
        let q = conditional_consensus_probs(&cp(&[0.8, 0.2]), 3).unwrap();
        assert!((q.get(0) - 0.512 / 0.520).abs() < 1e-14);
        assert!((q.get(1) - 0.008 / 0.520).abs() < 1e-14);
        let p = cp(&[0.1, 0.6, 0.3]);
        let q = conditional_consensus_probs(&p, 1).unwrap();
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn gaussian_input(rng: &mut crate::rng::Rng) -> Result<Vec<f64>> {
        Ok(vec![StandardNormal.sample(rng)])
    }

    #[test]
    fn simulate_certain_and_single_labeller() {
        let mut rng = rng_from_seed(1);
        let cfg = CurationConfig::new(4, true).unwrap();
        let ds = simulate_curation(gaussian_input, |_| cp(&[1.0, 0.0]), cfg, 200, 1, &mut rng).unwrap();
        assert!(ds.points.iter().all(|p| p.outcome == ConsensusOutcome::Label(0)));

        let cfg = CurationConfig::new(1, false).unwrap();
        let ds = simulate_curation(
            gaussian_input,
            |x| ClassProbs::from_logits(&[0.0, x[0]]),
            cfg,
            500,
            2,
            &mut rng,
        )
        .unwrap();
        assert_eq!(ds.noconsensus_fraction(), 0.0);
        ds.validate().unwrap();
    }

    #[test]
    fn simulate_noconsensus_fraction_half() {
        let mut rng = rng_from_seed(3);
        let cfg = CurationConfig::new(2, false).unwrap();
        let ds = simulate_curation(gaussian_input, |_| cp(&[0.5, 0.5]), cfg, 10_000, 3, &mut rng).unwrap();
        let frac = ds.noconsensus_fraction();
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        // Z = None on every rejected point, votes still reproduce outcomes
        ds.validate().unwrap();
        assert!(ds
            .points
            .iter()
            .all(|p| p.outcome.is_consensus() == p.x.is_some()));
    }

    #[test]
    fn simulate_rejects_bad_arguments_and_propagates_generator_errors() {
        let mut rng = rng_from_seed(0);
        let cfg = CurationConfig::new(2, true).unwrap();
        assert!(simulate_curation(gaussian_input, |_| cp(&[0.5, 0.5]), cfg, 0, 0, &mut rng).is_err());
        let failing = |_: &mut crate::rng::Rng| -> Result<Vec<f64>> { Err(invalid("boom")) };
        let err = simulate_curation(failing, |_| cp(&[0.5, 0.5]), cfg, 3, 0, &mut rng).unwrap_err();
        assert!(err.to_string().contains("boom"));
        assert!(CurationConfig::new(0, true).is_err());
    }

    fn one_point(outcome: ConsensusOutcome, s: usize, keep: bool) -> CuratedDataset {
        CuratedDataset {
            config: CurationConfig::new(s, keep).unwrap(),
            num_classes: 2,
            seed: 0,
            points: vec![CuratedPoint {
                x: Some(vec![0.0]),
                outcome,
                votes: None,
            }],
        }
    }

    #[test]
    fn curated_log_lik_examples() {
        let probs = vec![cp(&[0.8, 0.2])];
        let ds = one_point(ConsensusOutcome::Label(0), 3, true);
        let ll = |m| curated_log_lik(&ds, &probs, m).unwrap();
        assert!((ll(LikelihoodMode::Exact) - 0.512f64.ln()).abs() < 1e-14);
        assert!((ll(LikelihoodMode::ConsensusPower) - 0.512f64.ln()).abs() < 1e-14);
        assert!((ll(LikelihoodMode::Standard) - 0.8f64.ln()).abs() < 1e-14);
        assert!((ll(LikelihoodMode::Conditional) - (0.512f64 / 0.520).ln()).abs() < 1e-14);

        let ds = one_point(ConsensusOutcome::NoConsensus, 3, true);
        assert!((curated_log_lik(&ds, &probs, LikelihoodMode::Exact).unwrap() - 0.48f64.ln()).abs() < 1e-13);
        assert_eq!(curated_log_lik(&ds, &probs, LikelihoodMode::Standard).unwrap(), 0.0);

        let ds = one_point(ConsensusOutcome::NoConsensus, 1, true);
        assert_eq!(
            curated_log_lik(&ds, &probs, LikelihoodMode::Exact).unwrap(),
            f64::NEG_INFINITY
        );

        let mut ds = one_point(ConsensusOutcome::NoConsensus, 3, false);
        ds.points[0].x = None;
        assert!(curated_log_lik(&ds, &probs, LikelihoodMode::Exact).is_err());
        assert!(curated_log_lik(&ds, &[], LikelihoodMode::Exact).is_err());
    }

    #[test]
    fn certain_predictions_have_zero_log_lik() {
        let ds = one_point(ConsensusOutcome::Label(1), 4, true);
        let probs = vec![cp(&[0.0, 1.0])];
        for mode in [
            LikelihoodMode::Exact,
            LikelihoodMode::ConsensusPower,
            LikelihoodMode::Standard,
            LikelihoodMode::Conditional,
        ] {
            assert_eq!(curated_log_lik(&ds, &probs, mode).unwrap(), 0.0);
        }
    }

    #[test]
    fn marginal_estimator_examples() {
        let mut rng = rng_from_seed(5);
        let m = estimate_noconsensus_marginal(gaussian_input, |_| cp(&[1.0, 0.0]), 3, 100, &mut rng).unwrap();
        assert_eq!(m, 0.0);
        let m = estimate_noconsensus_marginal(gaussian_input, |_| cp(&[0.5, 0.5]), 2, 100, &mut rng).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        let m = estimate_noconsensus_marginal(
            gaussian_input,
            |x| ClassProbs::from_logits(&[0.0, x[0]]),
            1,
            100,
            &mut rng,
        )
        .unwrap();
        assert_eq!(m, 0.0);
        assert!(estimate_noconsensus_marginal(gaussian_input, |_| cp(&[0.5, 0.5]), 2, 0, &mut rng).is_err());
    }

    fn labelled(n: usize, k: usize) -> CuratedDataset {
        CuratedDataset {
            config: CurationConfig::new(1, true).unwrap(),
            num_classes: k,
            seed: 0,
            points: (0..n)
                .map(|i| CuratedPoint {
                    x: Some(vec![i as f64]),
                    outcome: ConsensusOutcome::Label(i % k),
                    votes: Some(vec![i % k]),
                })
                .collect(),
        }
    }

    fn unchanged_fraction(a: &CuratedDataset, b: &CuratedDataset) -> f64 {
        let same = a
            .points
            .iter()
            .zip(&b.points)
            .filter(|(p, q)| p.outcome == q.outcome)
            .count();
        same as f64 / a.len() as f64
    }

    #[test]
    fn label_noise_examples() {
        let mut rng = rng_from_seed(11);
        let ds = labelled(10_000, 2);
        let same = corrupt_labels(&ds, NoiseConfig::new(0.0).unwrap(), &mut rng).unwrap();
        assert_eq!(same, ds);

        let noisy = corrupt_labels(&ds, NoiseConfig::new(1.0).unwrap(), &mut rng).unwrap();
        let flipped = 1.0 - unchanged_fraction(&ds, &noisy);
        assert!((flipped - 0.5).abs() < 0.015, "{flipped}");
        assert!(noisy.points.iter().all(|p| p.votes.is_none()));

        let ds10 = labelled(10_000, 10);
        let noisy = corrupt_labels(&ds10, NoiseConfig::new(0.5).unwrap(), &mut rng).unwrap();
        let kept = unchanged_fraction(&ds10, &noisy);
        assert!((kept - 0.55).abs() < 0.02, "{kept}");

        assert!(NoiseConfig::new(1.5).is_err());
        let mut empty = one_point(ConsensusOutcome::NoConsensus, 2, true);
        empty.points[0].votes = None;
        assert!(corrupt_labels(&empty, NoiseConfig::new(0.5).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn json_round_trip_and_schema() {
        let mut rng = rng_from_seed(9);
        let cfg = CurationConfig::new(3, false).unwrap();
        let ds = simulate_curation(
            gaussian_input,
            |x| ClassProbs::from_logits(&[0.0, 2.0 * x[0]]),
            cfg,
            50,
            9,
            &mut rng,
        )
        .unwrap();
        let text = ds.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["config"]["S"], 3);
        assert_eq!(value["config"]["keep_noconsensus_inputs"], false);
        assert_eq!(value["seed"], 9);
        assert_eq!(CuratedDataset::from_json(&text).unwrap(), ds);

        let doc = r#"{"config":{"S":2,"keep_noconsensus_inputs":true},"seed":1,
            "points":[{"x":[0.5],"y":null,"votes":[0,1]},{"x":[1.0],"y":1,"votes":null}]}"#;
        let ds = CuratedDataset::from_json(doc).unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.points[0].outcome, ConsensusOutcome::NoConsensus);

        let bad = r#"{"config":{"S":2,"keep_noconsensus_inputs":true},"seed":1,
            "points":[{"x":[0.5],"y":0,"votes":[0,1]}]}"#;
        assert!(CuratedDataset::from_json(bad).is_err());
    }

    fn finite_diff(logits: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..logits.len())
            .map(|i| {
                let mut a = logits.to_vec();
                let mut b = logits.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let logits = [0.3, -1.2, 0.9];
        let cases = [
            (ConsensusOutcome::Label(1), LikelihoodMode::Standard),
            (ConsensusOutcome::Label(2), LikelihoodMode::Exact),
            (ConsensusOutcome::Label(0), LikelihoodMode::ConsensusPower),
            (ConsensusOutcome::Label(0), LikelihoodMode::Conditional),
            (ConsensusOutcome::NoConsensus, LikelihoodMode::Exact),
        ];
        for (outcome, mode) in cases {
            let mut g = [0.0; 3];
            let v = curated_log_lik_logits(&logits, outcome, 4, mode, &mut g);
            let probs = ClassProbs::from_logits(&logits);
            let ds = CuratedDataset {
                config: CurationConfig::new(4, true).unwrap(),
                num_classes: 3,
                seed: 0,
                points: vec![CuratedPoint { x: Some(vec![0.0]), outcome, votes: None }],
            };
            let direct = curated_log_lik(&ds, &[probs], mode).unwrap();
            assert!((v - direct).abs() < 1e-12, "{mode:?}");
            let fd = finite_diff(&logits, |l| {
                let mut g = [0.0; 3];
                curated_log_lik_logits(l, outcome, 4, mode, &mut g)
            });
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6, "{mode:?}: {g:?} vs {fd:?}");
            }
        }
        let counts = [3.0, 0.0, 5.0];
        let mut g = [0.0; 3];
        vote_counts_log_lik_logits(&logits, &counts, &mut g);
        let fd = finite_diff(&logits, |l| {
            let mut g = [0.0; 3];
            vote_counts_log_lik_logits(l, &counts, &mut g)
        });
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
