//! Smooth unconstrained minimisation (L-BFGS with a More–Thuente line search).

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimSettings {
    pub max_iters: u64,
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            history: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimReport {
    pub param: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: u64,
    pub converged: bool,
}

struct Problem<'a, F> {
    objective: &'a F,
    last: RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
    best: &'a RefCell<Option<(Vec<f64>, f64, Vec<f64>)>>,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        if let Some((lp, v, g)) = self.last.borrow().as_ref() {
            if lp.as_slice() == p {
                return (*v, g.clone());
            }
        }
        let (v, g) = (self.objective)(p);
        let mut best = self.best.borrow_mut();
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            *best = Some((p.to_vec(), v, g.clone()));
        }
        *self.last.borrow_mut() = Some((p.to_vec(), v, g.clone()));
        (v, g)
    }
}

impl<F> CostFunction for Problem<'_, F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let (v, _) = self.eval(p);
        if v.is_nan() {
            return Err(argmin::core::Error::msg("objective is NaN"));
        }
        Ok(v)
    }
}

impl<F> Gradient for Problem<'_, F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

fn norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Minimises `objective`, which returns the value and its gradient.
///
/// A failed line search near the optimum is not an error: the best point seen
/// so far is returned with `converged` set from its gradient norm.
pub fn minimize<F>(objective: &F, init: Vec<f64>, settings: &OptimSettings) -> Result<OptimReport>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (v0, g0) = objective(&init);
    if !v0.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "objective is {v0} at the initial point {init:?}"
        )));
    }
    if norm(&g0) <= settings.grad_tol {
        return Ok(OptimReport {
            grad_norm: norm(&g0),
            param: init,
            value: v0,
            iterations: 0,
            converged: true,
        });
    }
    let best = RefCell::new(None);
    let problem = Problem {
        objective,
        last: RefCell::new(None),
        best: &best,
    };
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), settings.history)
        .with_tolerance_grad(settings.grad_tol)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .with_tolerance_cost(0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcome = Executor::new(problem, solver)
        .configure(|s| s.param(init).max_iters(settings.max_iters))
        .run();
    let (iterations, failure) = match outcome {
        Ok(res) => (res.state().get_iter(), None),
        Err(e) => (0, Some(e.to_string())),
    };
    let best = best.into_inner();
    let (param, value, grad) = best.ok_or_else(|| {
        Error::NumericalFailure(format!(
            "optimiser produced no finite evaluation: {failure:?}"
        ))
    })?;
    let grad_norm = norm(&grad);
    Ok(OptimReport {
        converged: grad_norm <= settings.grad_tol,
        param,
        value,
        grad_norm,
        iterations,
    })
}
