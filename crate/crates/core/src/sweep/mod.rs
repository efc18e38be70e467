//! λ sweeps over replicate datasets, λ* estimation and CSV output.

pub mod bnn_experiments;
pub mod gp_experiments;
pub mod illustrate;
pub mod lambda_star;
pub mod output;
pub mod presets;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::derive_seed;

pub use bnn_experiments::BnnProblem;
pub use gp_experiments::GpProblem;
pub use illustrate::{illustrate_clustering, Illustration2DConfig, IllustrationPoint};
pub use lambda_star::{bootstrap_ci, cold_posterior_depth, log_grid, mean_curve, optimal_lambda, LambdaStar};
pub use output::{emit_csv, emit_summary, read_csv, read_summary, SummaryRecord, SweepRecord};
pub use presets::{bnn_grid, gp_grid, preset, PRESET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GpRegression,
    GpClassification,
    GpCuratedExact,
    GpCuratedTrainStandardTestExact,
    GpCuratedStandard,
    BnnCuratedStandard,
    BnnMultilabel,
    BnnNoise,
    MapSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GpRegression => "gp-regression",
            Self::GpClassification => "gp-classification",
            Self::GpCuratedExact => "gp-curated-exact",
            Self::GpCuratedTrainStandardTestExact => "gp-curated-train-standard-test-exact",
            Self::GpCuratedStandard => "gp-curated-standard",
            Self::BnnCuratedStandard => "bnn-curated-standard",
            Self::BnnMultilabel => "bnn-multilabel",
            Self::BnnNoise => "bnn-noise",
            Self::MapSweep => "map-sweep",
        }
    }

    pub fn is_gp(self) -> bool {
        self.name().starts_with("gp-")
    }

    /// Row labels in the CSV `kind` column. The multi-label study trains on
    /// consensus labels (`single`) and on every vote (`multi`, scored per vote);
    /// `multi-consensus-test` scores the latter on the consensus test labels.
    pub fn arms(self) -> Vec<String> {
        match self {
            Self::BnnMultilabel => vec![
                "bnn-multilabel-single".into(),
                "bnn-multilabel-multi".into(),
                "bnn-multilabel-multi-consensus-test".into(),
            ],
            other => vec![other.name().into()],
        }
    }

    /// Whether the number of labellers affects the generated data.
    pub fn uses_s(self) -> bool {
        !matches!(self, Self::GpRegression | Self::GpClassification)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: ExperimentKind,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
    #[serde(rename = "S_values")]
    pub s_values: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise_ps: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub gp: GpProblem,
    #[serde(default)]
    pub bnn: BnnProblem,
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_resamples() -> usize {
    1000
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty()
            || self.lambda_grid[0] <= 0.0
            || self.lambda_grid.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(invalid("lambda_grid must be non-empty, positive and strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates must be at least 1"));
        }
        if self.s_values.is_empty() || self.s_values.contains(&0) {
            return Err(invalid("S values must be non-empty and positive"));
        }
        if self.noise_ps.is_empty() || self.noise_ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("noise probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seed of one replicate; independent of S and p so that cells share
    /// inputs and ground-truth functions.
    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive_seed(self.seed, &[replicate as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub test_loglik: f64,
    pub test_acc: f64,
}

impl Metrics {
    pub const FAILED: Self = Self {
        test_loglik: f64::NAN,
        test_acc: f64::NAN,
    };
}

/// All replicates of one (arm, S, p) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub kind: String,
    pub s: usize,
    pub p: f64,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `[replicate][λ]`; NaN where the replicate failed.
    pub metrics: Vec<Vec<Metrics>>,
    pub failures: Vec<(usize, String)>,
    /// More than 10% of replicates failed.
    pub degraded: bool,
    /// Mean test log-likelihood over successful replicates.
    pub mean_curve: Vec<f64>,
    pub lambda_star: Option<LambdaStar>,
    pub lambda_star_ci: (f64, f64),
}

impl SweepCurve {
    fn loglik_rows(&self) -> Vec<Vec<f64>> {
        self.metrics
            .iter()
            .filter(|row| row.iter().all(|m| m.test_loglik.is_finite()))
            .map(|row| row.iter().map(|m| m.test_loglik).collect())
            .collect()
    }

    pub fn mean_accuracy(&self) -> Vec<f64> {
        let ok: Vec<_> = self
            .metrics
            .iter()
            .filter(|row| row.iter().all(|m| m.test_loglik.is_finite()))
            .collect();
        (0..self.lambda_grid.len())
            .map(|j| ok.iter().map(|r| r[j].test_acc).sum::<f64>() / ok.len() as f64)
            .collect()
    }

    pub fn records(&self) -> Vec<SweepRecord> {
        let mut out = Vec::with_capacity(self.metrics.len() * self.lambda_grid.len());
        for (r, row) in self.metrics.iter().enumerate() {
            for (lambda, m) in self.lambda_grid.iter().zip(row) {
                out.push(SweepRecord {
                    kind: self.kind.clone(),
                    s: self.s,
                    p: self.p,
                    lambda: *lambda,
                    replicate: r,
                    test_loglik: m.test_loglik,
                    test_acc: m.test_acc,
                    seed: self.seeds[r],
                });
            }
        }
        out
    }

    pub fn summary(&self) -> SummaryRecord {
        let star = self.lambda_star;
        SummaryRecord {
            kind: self.kind.clone(),
            s: self.s,
            p: self.p,
            lambda_star: star.map_or(f64::NAN, |s| s.value),
            lambda_star_lo: self.lambda_star_ci.0,
            lambda_star_hi: self.lambda_star_ci.1,
            flat_flag: star.is_some_and(|s| s.flat),
            boundary_flag: star.is_some_and(|s| s.boundary),
        }
    }

    pub fn cold_posterior_depth(&self) -> f64 {
        cold_posterior_depth(&self.lambda_grid, &self.mean_curve)
    }

    fn finish(&mut self, resamples: usize, seed: u64) -> Result<()> {
        let rows = self.loglik_rows();
        self.degraded = self.failures.len() * 10 > self.metrics.len();
        self.mean_curve = mean_curve(&rows);
        if rows.is_empty() || self.lambda_grid.len() < 3 {
            self.mean_curve = vec![f64::NAN; self.lambda_grid.len()];
            self.lambda_star = None;
            self.lambda_star_ci = (f64::NAN, f64::NAN);
            return Ok(());
        }
        self.lambda_star = Some(optimal_lambda(&self.lambda_grid, &self.mean_curve)?);
        self.lambda_star_ci = bootstrap_ci(&self.lambda_grid, &rows, resamples, seed)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub curves: Vec<SweepCurve>,
}

impl SweepResult {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.curves.iter().flat_map(SweepCurve::records).collect()
    }

    pub fn summaries(&self) -> Vec<SummaryRecord> {
        self.curves.iter().map(SweepCurve::summary).collect()
    }

    pub fn curve(&self, kind: &str, s: usize, p: f64) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.kind == kind && c.s == s && c.p == p)
    }

    /// `(S, 1/λ*)` for every cell of `kind`, in S order.
    pub fn lambda_star_vs_s(&self, kind: &str) -> Vec<(usize, f64)> {
        let mut rows: Vec<(usize, f64)> = self
            .curves
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| (c.s, c.lambda_star.map_or(f64::NAN, |l| 1.0 / l.value)))
            .collect();
        rows.sort_by_key(|r| r.0);
        rows
    }
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Per-arm metrics of one replicate at every λ.
fn replicate_arms(config: &SweepConfig, s: usize, p: f64, seed: u64) -> Result<Vec<Vec<Metrics>>> {
    if config.kind.is_gp() {
        Ok(vec![gp_experiments::replicate_curve(
            config.kind,
            &config.gp,
            &config.lambda_grid,
            s,
            seed,
        )?])
    } else {
        bnn_experiments::replicate_curves(config.kind, &config.bnn, &config.lambda_grid, s, p, seed)
    }
}

/// Runs every (S, p) cell: for each replicate a fresh dataset, inference at
/// each λ, and held-out metrics under the kind's test likelihood.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with_progress(config, |_, _, _| {})
}

/// As [`run_sweep`], calling `progress(S, p, replicates_done)` after each cell.
pub fn run_sweep_with_progress(
    config: &SweepConfig,
    progress: impl Fn(usize, f64, usize),
) -> Result<SweepResult> {
    config.validate()?;
    let s_values: Vec<usize> = if config.kind.uses_s() {
        config.s_values.clone()
    } else {
        vec![1]
    };
    let ps: Vec<f64> = if config.kind == ExperimentKind::BnnNoise {
        config.noise_ps.clone()
    } else {
        vec![0.0]
    };
    let arms = config.kind.arms();
    let mut result = SweepResult::default();
    for &s in &s_values {
        for &p in &ps {
            let seeds: Vec<u64> = (0..config.replicates).map(|r| config.replicate_seed(r)).collect();
            let outcomes = map_indices(config.replicates, |r| replicate_arms(config, s, p, seeds[r]));
            let mut curves: Vec<SweepCurve> = arms
                .iter()
                .map(|arm| SweepCurve {
                    kind: arm.clone(),
                    s,
                    p,
                    lambda_grid: config.lambda_grid.clone(),
                    seeds: seeds.clone(),
                    metrics: Vec::with_capacity(config.replicates),
                    failures: Vec::new(),
                    degraded: false,
                    mean_curve: Vec::new(),
                    lambda_star: None,
                    lambda_star_ci: (f64::NAN, f64::NAN),
                })
                .collect();
            for (r, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Ok(per_arm) => {
                        if per_arm.len() != curves.len() {
                            return Err(invalid(format!(
                                "{} produced {} curves for {} arms",
                                config.kind.name(),
                                per_arm.len(),
                                curves.len()
                            )));
                        }
                        for (curve, row) in curves.iter_mut().zip(per_arm) {
                            curve.metrics.push(row);
                        }
                    }
                    Err(e) => {
                        for curve in &mut curves {
                            curve.metrics.push(vec![Metrics::FAILED; config.lambda_grid.len()]);
                            curve.failures.push((r, e.to_string()));
                        }
                    }
                }
            }
            for (a, curve) in curves.iter_mut().enumerate() {
                curve.finish(
                    config.bootstrap_resamples,
                    derive_seed(config.seed, &[u64::MAX, s as u64, p.to_bits(), a as u64]),
                )?;
            }
            result.curves.extend(curves);
            progress(s, p, config.replicates);
        }
    }
    Ok(result)
}
