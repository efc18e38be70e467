use super::{log_grid, BnnProblem, ExperimentKind, GpProblem, SweepConfig};
use crate::error::{invalid, Result};

pub const PRESET_NAMES: [&str; 11] = [
    "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "figA2", "figA2-full", "fig5", "fig6", "figA1",
];

/// Default λ grid for GP sweeps: 15 log-spaced points on [0.05, 5].
pub fn gp_grid() -> Vec<f64> {
    log_grid(0.05, 5.0, 15)
}

/// Default λ grid for network sweeps: 8 log-spaced points on [1/32, 4].
pub fn bnn_grid() -> Vec<f64> {
    log_grid(1.0 / 32.0, 4.0, 8)
}

pub fn preset(name: &str) -> Result<SweepConfig> {
    let gp = |kind, s_values: Vec<usize>| SweepConfig {
        kind,
        lambda_grid: gp_grid(),
        replicates: 20,
        s_values,
        noise_ps: vec![0.0],
        seed: 20_230_501,
        bootstrap_resamples: 1000,
        gp: GpProblem::default(),
        bnn: BnnProblem::default(),
    };
    let bnn = |kind, s_values: Vec<usize>, replicates| SweepConfig {
        kind,
        lambda_grid: bnn_grid(),
        replicates,
        s_values,
        noise_ps: vec![0.0],
        seed: 20_230_502,
        bootstrap_resamples: 1000,
        gp: GpProblem::default(),
        bnn: BnnProblem::default(),
    };
    let cfg = match name {
        "fig3a" => gp(ExperimentKind::GpRegression, vec![1]),
        "fig3b" => gp(ExperimentKind::GpClassification, vec![1]),
        "fig3c" => gp(ExperimentKind::GpCuratedExact, vec![4]),
        "fig3d" => gp(ExperimentKind::GpCuratedTrainStandardTestExact, vec![4]),
        "fig3e" | "fig3f" => gp(ExperimentKind::GpCuratedStandard, vec![1, 2, 4, 8]),
        "figA2" => bnn(ExperimentKind::BnnCuratedStandard, vec![1, 2, 4, 8], 100),
        "figA2-full" => bnn(ExperimentKind::BnnCuratedStandard, vec![1, 2, 4, 8], 500),
        "fig5" => bnn(ExperimentKind::BnnMultilabel, vec![8], 30),
        "fig6" => SweepConfig {
            noise_ps: vec![0.0, 0.2, 0.5],
            ..bnn(ExperimentKind::BnnNoise, vec![4], 30)
        },
        "figA1" => bnn(ExperimentKind::MapSweep, vec![4], 30),
        _ => return Err(invalid(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")))),
    };
    Ok(cfg)
}
