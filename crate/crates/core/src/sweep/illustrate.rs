//! Two 2-D Gaussian classes labelled by S simulated annotators: rejecting
//! noconsensus points leaves visibly separated clusters.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curation::{consensus_outcome, sample_class, ClassProbs, ConsensusOutcome};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Illustration2DConfig {
    pub means: [[f64; 2]; 2],
    /// Row-major 2×2 covariance per class.
    pub covs: [[f64; 4]; 2],
    #[serde(rename = "S")]
    pub s: usize,
    pub points_per_class: usize,
}

impl Default for Illustration2DConfig {
    fn default() -> Self {
        Self {
            means: [[-1.0, 0.0], [1.0, 0.0]],
            covs: [[1.0, 0.0, 0.0, 1.0]; 2],
            s: 7,
            points_per_class: 500,
        }
    }
}

struct ClassDensity {
    mean: Vector2<f64>,
    chol: Cholesky<f64, nalgebra::U2>,
    inv: Matrix2<f64>,
    log_norm: f64,
}

impl ClassDensity {
    fn new(mean: [f64; 2], cov: [f64; 4]) -> Result<Self> {
        let m = Matrix2::new(cov[0], cov[1], cov[2], cov[3]);
        if (cov[1] - cov[2]).abs() > 1e-12 {
            return Err(invalid("covariance must be symmetric"));
        }
        let chol = Cholesky::new(m).ok_or_else(|| invalid("covariance must be positive definite"))?;
        let inv = chol.inverse();
        let log_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * m.determinant().ln();
        Ok(Self {
            mean: Vector2::new(mean[0], mean[1]),
            chol,
            inv,
            log_norm,
        })
    }

    fn log_pdf(&self, x: &Vector2<f64>) -> f64 {
        let d = x - self.mean;
        self.log_norm - 0.5 * (d.transpose() * self.inv * d)[(0, 0)]
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + self.chol.l() * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IllustrationPoint {
    pub x: f64,
    pub y: f64,
    pub true_class: usize,
    pub outcome: ConsensusOutcome,
}

fn densities(config: &Illustration2DConfig) -> Result<[ClassDensity; 2]> {
    if config.s == 0 {
        return Err(invalid("S must be at least 1"));
    }
    Ok([
        ClassDensity::new(config.means[0], config.covs[0])?,
        ClassDensity::new(config.means[1], config.covs[1])?,
    ])
}

/// Class posterior at `point`: ratio of the class densities under equal class priors.
pub fn class_posterior(config: &Illustration2DConfig, point: [f64; 2]) -> Result<ClassProbs> {
    let d = densities(config)?;
    let x = Vector2::new(point[0], point[1]);
    Ok(ClassProbs::from_logits(&[d[0].log_pdf(&x), d[1].log_pdf(&x)]))
}

/// `points_per_class` draws from each Gaussian, each labelled by `S` annotators
/// who sample from the class posterior.
pub fn illustrate_clustering<R: Rng + ?Sized>(
    config: &Illustration2DConfig,
    rng: &mut R,
) -> Result<Vec<IllustrationPoint>> {
    let d = densities(config)?;
    let mut out = Vec::with_capacity(2 * config.points_per_class);
    for (class, density) in d.iter().enumerate() {
        for _ in 0..config.points_per_class {
            let x = density.sample(rng);
            let probs = ClassProbs::from_logits(&[d[0].log_pdf(&x), d[1].log_pdf(&x)]);
            let votes: Vec<usize> = (0..config.s).map(|_| sample_class(&probs, rng)).collect();
            out.push(IllustrationPoint {
                x: x[0],
                y: x[1],
                true_class: class,
                outcome: consensus_outcome(&votes)?,
            });
        }
    }
    Ok(out)
}

/// CSV with columns `x,y,true_class,outcome`; outcome is a class index or `none`.
pub fn write_illustration_csv(points: &[IllustrationPoint], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    w.write_record(["x", "y", "true_class", "outcome"])?;
    for p in points {
        let outcome = match p.outcome {
            ConsensusOutcome::Label(y) => y.to_string(),
            ConsensusOutcome::NoConsensus => "none".to_string(),
        };
        w.write_record([p.x.to_string(), p.y.to_string(), p.true_class.to_string(), outcome])?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::noconsensus_log_prob;
    use crate::rng::rng_from_seed;

    #[test]
    fn midpoint_is_ambiguous() {
        let cfg = Illustration2DConfig::default();
        let probs = class_posterior(&cfg, [0.0, 3.0]).unwrap();
        assert!((probs.get(0) - 0.5).abs() < 1e-15);
        let nc = noconsensus_log_prob(&probs, 7).exp();
        assert!((nc - (1.0 - 2.0 * 0.5f64.powi(7))).abs() < 1e-12);
        assert!((nc - 0.984375).abs() < 1e-12);
    }

    #[test]
    fn far_points_reach_consensus() {
        let cfg = Illustration2DConfig::default();
        // log density ratio 2x = ln 1e6
        let x = 1e6f64.ln() / 2.0;
        let probs = class_posterior(&cfg, [x, 0.0]).unwrap();
        assert!((probs.get(1) - 1e6 / (1e6 + 1.0)).abs() < 1e-12);
        assert!(noconsensus_log_prob(&probs, 7).exp() < 1e-4);
    }

    #[test]
    fn consensus_rate_rises_away_from_boundary() {
        let cfg = Illustration2DConfig {
            points_per_class: 20_000,
            ..Illustration2DConfig::default()
        };
        let pts = illustrate_clustering(&cfg, &mut rng_from_seed(3)).unwrap();
        assert_eq!(pts.len(), 40_000);
        // bins on |x|, the distance from the decision boundary x = 0
        let edges = [0.0, 0.25, 0.5, 1.0, 1.5, 2.5];
        let mut rates = Vec::new();
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let bin: Vec<_> = pts.iter().filter(|p| p.x.abs() >= lo && p.x.abs() < hi).collect();
            let observed = bin.iter().filter(|p| p.outcome.is_consensus()).count() as f64 / bin.len() as f64;
            let expected = bin
                .iter()
                .map(|p| 1.0 - noconsensus_log_prob(&class_posterior(&cfg, [p.x, p.y]).unwrap(), 7).exp())
                .sum::<f64>()
                / bin.len() as f64;
            let se = (expected * (1.0 - expected) / bin.len() as f64).sqrt();
            assert!((observed - expected).abs() < 4.0 * se + 1e-3, "bin {lo}..{hi}: {observed} vs {expected}");
            rates.push(observed);
        }
        assert!(rates.windows(2).all(|w| w[0] < w[1]), "{rates:?}");
    }

    #[test]
    fn rejects_bad_covariance() {
        let cfg = Illustration2DConfig {
            covs: [[1.0, 2.0, 2.0, 1.0], [1.0, 0.0, 0.0, 1.0]],
            ..Illustration2DConfig::default()
        };
        assert!(illustrate_clustering(&cfg, &mut rng_from_seed(0)).is_err());
    }
}
