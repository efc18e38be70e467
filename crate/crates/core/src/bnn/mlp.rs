use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curation::ClassProbs;
use crate::error::{invalid, Result};

/// One-hidden-layer ReLU network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub output_classes: usize,
}

impl MlpArch {
    pub fn new(input_dim: usize, hidden_units: usize, output_classes: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_units,
            output_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_units == 0 || self.output_classes == 0 {
            return Err(invalid(format!("all layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Layout: `W1` (hidden × input, row-major), `b1`, `W2` (classes × hidden), `b2`.
    pub fn num_params(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_units, self.output_classes);
        h * d + h + c * h + c
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (d, h, c) = (self.input_dim, self.hidden_units, self.output_classes);
        let b1 = h * d;
        let w2 = b1 + h;
        (b1, w2, w2 + c * h)
    }

    /// Prior variance of every parameter at unit scale: `2/fan-in` for weights, 1 for biases.
    pub fn base_prior_variances(&self) -> Vec<f64> {
        let (d, h, c) = (self.input_dim, self.hidden_units, self.output_classes);
        let mut v = Vec::with_capacity(self.num_params());
        v.extend(std::iter::repeat_n(2.0 / d as f64, h * d));
        v.extend(std::iter::repeat_n(1.0, h));
        v.extend(std::iter::repeat_n(2.0 / h as f64, c * h));
        v.extend(std::iter::repeat_n(1.0, c));
        v
    }

    /// `(name, index range)` of each parameter block.
    pub fn layers(&self) -> [(&'static str, std::ops::Range<usize>); 4] {
        let (b1, w2, b2) = self.offsets();
        [
            ("W1", 0..b1),
            ("b1", b1..w2),
            ("W2", w2..b2),
            ("b2", b2..self.num_params()),
        ]
    }
}

/// Flat parameters plus the prior scale `σ²`: parameter `i` has prior variance
/// `σ² · base_prior_variances()[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub theta: Vec<f64>,
    pub arch: MlpArch,
    pub prior_var: f64,
}

impl MlpParams {
    pub fn new(theta: Vec<f64>, arch: MlpArch, prior_var: f64) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.num_params() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                theta.len()
            )));
        }
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(invalid(format!("prior variance must be positive, got {prior_var}")));
        }
        Ok(Self { theta, arch, prior_var })
    }

    pub fn zeros(arch: MlpArch, prior_var: f64) -> Result<Self> {
        Self::new(vec![0.0; arch.num_params()], arch, prior_var)
    }

    pub fn sample_prior<R: Rng + ?Sized>(arch: MlpArch, prior_var: f64, rng: &mut R) -> Result<Self> {
        let theta = arch
            .base_prior_variances()
            .iter()
            .map(|v| (prior_var * v).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(theta, arch, prior_var)
    }

    pub fn prior_variances(&self) -> Vec<f64> {
        self.arch
            .base_prior_variances()
            .into_iter()
            .map(|v| v * self.prior_var)
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim {
            return Err(invalid(format!(
                "input has {} dims, network expects {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        let mut ws = Workspace::new(&self.arch);
        forward_into(&self.theta, &self.arch, x, &mut ws);
        Ok(ws.logits)
    }

    pub fn class_probs(&self, x: &[f64]) -> Result<ClassProbs> {
        Ok(ClassProbs::from_logits(&self.forward(x)?))
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &MlpArch) -> Self {
        Self {
            hidden: vec![0.0; arch.hidden_units],
            logits: vec![0.0; arch.output_classes],
        }
    }
}

pub(crate) fn forward_into(theta: &[f64], arch: &MlpArch, x: &[f64], ws: &mut Workspace) {
    let (d, h, c) = (arch.input_dim, arch.hidden_units, arch.output_classes);
    let (b1, w2, b2) = arch.offsets();
    for j in 0..h {
        let row = &theta[j * d..(j + 1) * d];
        let pre = theta[b1 + j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        ws.hidden[j] = pre.max(0.0);
    }
    for k in 0..c {
        let row = &theta[w2 + k * h..w2 + (k + 1) * h];
        ws.logits[k] = theta[b2 + k] + row.iter().zip(&ws.hidden).map(|(w, a)| w * a).sum::<f64>();
    }
}

/// Sum over the selected rows of the row-major input matrix `x` of
/// `row_lik(i, logits, dlogits)`, which returns a log-likelihood and writes its
/// gradient with respect to the logits. Adds `scale ×` the gradient of the sum
/// with respect to θ into `grad`, unless some row returns `-∞`, in which case
/// `-∞` is returned and `grad` is left unchanged.
pub(crate) fn batch_log_lik(
    theta: &[f64],
    arch: &MlpArch,
    x: &[f64],
    rows: Option<&[usize]>,
    mut row_lik: impl FnMut(usize, &[f64], &mut [f64]) -> f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let (d, h, c) = (arch.input_dim, arch.hidden_units, arch.output_classes);
    let (b1, w2, b2) = arch.offsets();
    let n = rows.map_or(x.len() / d, <[usize]>::len);
    // W1 transposed to d × h so that every inner loop runs over hidden units
    let mut w1t = vec![0.0; d * h];
    for j in 0..h {
        for i in 0..d {
            w1t[i * h + j] = theta[j * d + i];
        }
    }
    let mut gw1t = vec![0.0; d * h];
    let mut gw2 = vec![0.0; c * h];
    let mut gb1 = vec![0.0; h];
    let mut gb2 = vec![0.0; c];
    let mut hidden = vec![0.0; h];
    let mut dh = vec![0.0; h];
    let (mut logits, mut dlogits) = (vec![0.0; c], vec![0.0; c]);
    let mut total = 0.0;
    for r in 0..n {
        let idx = rows.map_or(r, |rs| rs[r]);
        let xr = &x[idx * d..(idx + 1) * d];
        hidden.copy_from_slice(&theta[b1..w2]);
        for (i, &xi) in xr.iter().enumerate() {
            for (a, w) in hidden.iter_mut().zip(&w1t[i * h..(i + 1) * h]) {
                *a += xi * w;
            }
        }
        hidden.iter_mut().for_each(|a| *a = a.max(0.0));
        for k in 0..c {
            logits[k] = theta[b2 + k] + dot(&theta[w2 + k * h..w2 + (k + 1) * h], &hidden);
        }
        let ll = row_lik(idx, &logits, &mut dlogits);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        total += ll;
        dh.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..c {
            let g = scale * dlogits[k];
            if g == 0.0 {
                continue;
            }
            gb2[k] += g;
            for (acc, a) in gw2[k * h..(k + 1) * h].iter_mut().zip(&hidden) {
                *acc += g * a;
            }
            for (acc, w) in dh.iter_mut().zip(&theta[w2 + k * h..w2 + (k + 1) * h]) {
                *acc += g * w;
            }
        }
        for (v, a) in dh.iter_mut().zip(&hidden) {
            if *a <= 0.0 {
                *v = 0.0;
            }
        }
        for (acc, v) in gb1.iter_mut().zip(&dh) {
            *acc += v;
        }
        for (i, &xi) in xr.iter().enumerate() {
            for (acc, v) in gw1t[i * h..(i + 1) * h].iter_mut().zip(&dh) {
                *acc += xi * v;
            }
        }
    }
    for j in 0..h {
        for i in 0..d {
            grad[j * d + i] += gw1t[i * h + j];
        }
        grad[b1 + j] += gb1[j];
    }
    for (g, v) in grad[w2..b2].iter_mut().zip(&gw2) {
        *g += v;
    }
    for (g, v) in grad[b2..].iter_mut().zip(&gb2) {
        *g += v;
    }
    total
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
