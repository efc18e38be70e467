use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Curves whose mean varies by less than this many nats are treated as flat.
pub const FLAT_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStar {
    pub value: f64,
    pub flat: bool,
    /// The maximiser sits at the first or last grid point.
    pub boundary: bool,
}

/// Maximiser of `curve` over `grid`, refined by a quadratic in `log λ` through
/// the best grid point and its two neighbours. Ties go to the grid point
/// closest to λ = 1 in log space.
pub fn optimal_lambda(grid: &[f64], curve: &[f64]) -> Result<LambdaStar> {
    if grid.len() < 3 || grid.len() != curve.len() {
        return Err(invalid("need at least 3 grid points and a matching curve"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] <= 0.0 {
        return Err(invalid("grid must be positive and strictly increasing"));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(invalid("curve has non-finite values"));
    }
    let max = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min < FLAT_RANGE {
        return Ok(LambdaStar {
            value: 1.0,
            flat: true,
            boundary: false,
        });
    }
    let best = (0..grid.len())
        .filter(|&i| curve[i] == max)
        .min_by(|&a, &b| grid[a].ln().abs().total_cmp(&grid[b].ln().abs()))
        .expect("non-empty");
    if best == 0 || best == grid.len() - 1 {
        return Ok(LambdaStar {
            value: grid[best],
            flat: false,
            boundary: true,
        });
    }
    let (t0, t1, t2) = (grid[best - 1].ln(), grid[best].ln(), grid[best + 1].ln());
    let (y0, y1, y2) = (curve[best - 1], curve[best], curve[best + 1]);
    // vertex of the interpolating parabola (divided differences)
    let d01 = (y1 - y0) / (t1 - t0);
    let d12 = (y2 - y1) / (t2 - t1);
    let a = (d12 - d01) / (t2 - t0);
    let t = if a < 0.0 {
        let b = d01 - a * (t0 + t1);
        (-b / (2.0 * a)).clamp(t0, t2)
    } else {
        t1
    };
    Ok(LambdaStar {
        value: t.exp(),
        flat: false,
        boundary: false,
    })
}

/// Element-wise mean over replicates, `rows[replicate][λ]`.
pub fn mean_curve(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    (0..first.len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

/// Percentile bootstrap over replicates for λ*: `(lo, hi)` at 2.5% / 97.5%.
pub fn bootstrap_ci(grid: &[f64], rows: &[Vec<f64>], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(invalid("no replicates to resample"));
    }
    if resamples == 0 {
        let s = optimal_lambda(grid, &mean_curve(rows))?.value;
        return Ok((s, s));
    }
    let mut rng = rng_from_seed(seed);
    let mut stars = Vec::with_capacity(resamples);
    let mut sample = Vec::with_capacity(rows.len());
    for _ in 0..resamples {
        sample.clear();
        for _ in 0..rows.len() {
            sample.push(rows[rng.random_range(0..rows.len())].clone());
        }
        stars.push(optimal_lambda(grid, &mean_curve(&sample))?.value);
    }
    stars.sort_by(f64::total_cmp);
    Ok((quantile(&stars, 0.025), quantile(&stars, 0.975)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `max_{λ<1} [LL(λ) − LL(1)]`, clipped at 0; NaN when 1 is not on the grid.
pub fn cold_posterior_depth(grid: &[f64], curve: &[f64]) -> f64 {
    let Some(one) = grid.iter().position(|&l| (l - 1.0).abs() < 1e-12) else {
        return f64::NAN;
    };
    (0..one)
        .map(|i| curve[i] - curve[one])
        .fold(0.0, f64::max)
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
