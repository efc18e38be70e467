use super::mlp::MlpParams;
use super::posterior::{BnnData, BnnPosterior, PosteriorSpec};
use super::sampler::Target;
use crate::error::{invalid, Error, Result};
use crate::optim::{minimize, OptimReport, OptimSettings};

/// Tempered MAP: maximises `(1/λ) log P(y | θ) + log P(θ)` from `init`.
pub fn map_fit(init: &MlpParams, data: &BnnData, spec: PosteriorSpec, settings: &OptimSettings) -> Result<(MlpParams, OptimReport)> {
    if init.theta.iter().any(|t| !t.is_finite()) {
        return Err(invalid("initial parameters must be finite"));
    }
    let post = BnnPosterior::for_params(init, data, spec)?;
    let objective = |theta: &[f64]| {
        let mut grad = vec![0.0; theta.len()];
        let v = post.log_density(theta, &mut grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        (-v, grad)
    };
    let report = minimize(&objective, init.theta.clone(), settings)?;
    if report.param.iter().any(|t| !t.is_finite()) {
        return Err(Error::NumericalFailure("MAP iterate diverged".into()));
    }
    let params = MlpParams::new(report.param.clone(), init.arch, init.prior_var)?;
    Ok((params, report))
}
