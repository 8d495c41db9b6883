//! Augmented Lagrangian driver for analytic multi-objective problems.
//!
//! The inner problem over `(x, t)` is solved by projected (proximal)
//! gradient descent with a backtracking step; the outer loop resets `t`,
//! minimises, and applies the multiplier update.

use serde::{Deserialize, Serialize};

use super::lagrangian::{
    al_loss, al_sensitivity, al_update, kkt_residual, ALState, AlForm, MultiplierSchedule,
};
use super::scalarize::{check_dims, constraints_unchecked};
use super::types::ScalarizationConfig;
use crate::error::{Error, Result};

/// A multi-objective problem over `x in R^d` with smooth objectives and
/// optionally one or more objectives handled by a proximal map.
pub trait MultiObjective {
    fn n_objectives(&self) -> usize;
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Vec<f64>;
    /// Gradient of objective `j`, or `None` when `j` is handled by [`prox`](Self::prox).
    fn gradient(&self, j: usize, x: &[f64]) -> Option<Vec<f64>>;
    /// Applies the proximal map of `step * sum_j weights[j] * f_j` over the
    /// nonsmooth objectives. Identity by default.
    fn prox(&self, _x: &mut [f64], _weights: &[f64], _step: f64) {}
    /// Projection onto the feasible set. Identity by default.
    fn project(&self, _x: &mut [f64]) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlSolverConfig {
    pub mu0: f64,
    pub schedule: MultiplierSchedule,
    pub form: AlForm,
    pub max_outer: usize,
    pub inner_max_iter: usize,
    /// Stop the inner loop when the gradient-mapping norm drops below this.
    pub inner_tol: f64,
    /// Stop the outer loop when the KKT residual drops below this.
    pub kkt_tol: f64,
    pub initial_step: f64,
}

impl Default for AlSolverConfig {
    fn default() -> Self {
        Self {
            mu0: 10.0,
            schedule: MultiplierSchedule { mu_factor: 1.0 },
            form: AlForm::Clamped,
            max_outer: 200,
            inner_max_iter: 20_000,
            inner_tol: 1e-11,
            kkt_tol: 1e-9,
            initial_step: 0.1,
        }
    }
}

/// One outer iteration, as written to run logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub objectives: Vec<f64>,
    pub t: f64,
    pub max_h: f64,
    pub mu: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub t: f64,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub max_h: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub history: Vec<OuterRecord>,
}

struct Evaluation {
    h: Vec<f64>,
    value: f64,
}

fn evaluate<P: MultiObjective + ?Sized>(
    problem: &P,
    x: &[f64],
    t: f64,
    state: &ALState,
    cfg: &ScalarizationConfig,
) -> Result<Evaluation> {
    let objectives = problem.evaluate(x);
    if objectives.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("objective evaluated to a non-finite value".into()));
    }
    let h = constraints_unchecked(&objectives, t, cfg);
    let value = al_loss(&h, &ALState { t, ..state.clone() })?;
    Ok(Evaluation { h, value })
}

/// Minimises `L_A(x, t)` for fixed multipliers. Returns the new point and
/// the number of accepted steps.
pub fn minimize_inner<P: MultiObjective + ?Sized>(
    problem: &P,
    cfg: &ScalarizationConfig,
    state: &ALState,
    x: &mut Vec<f64>,
    t: &mut f64,
    solver: &AlSolverConfig,
) -> Result<(usize, bool)> {
    let n = problem.n_objectives();
    let mut step = solver.initial_step;
    let mut cur = evaluate(problem, x, *t, state, cfg)?;
    for it in 0..solver.inner_max_iter {
        let sens = al_sensitivity(&cur.h, state, cfg);
        let mut gx = vec![0.0; x.len()];
        for j in 0..n {
            if let Some(g) = problem.gradient(j, x) {
                for (a, b) in gx.iter_mut().zip(&g) {
                    *a += sens.objective[j] * b;
                }
            }
        }
        loop {
            let mut xn: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a - step * g).collect();
            problem.prox(&mut xn, &sens.objective, step);
            problem.project(&mut xn);
            let tn = *t - step * sens.t;
            let d2: f64 = xn.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                + (tn - *t).powi(2);
            if d2.sqrt() / step <= solver.inner_tol {
                return Ok((it, true));
            }
            let next = evaluate(problem, &xn, tn, state, cfg)?;
            if next.value <= cur.value - 1e-4 * d2 / step {
                *x = xn;
                *t = tn;
                cur = next;
                step = (step * 2.0).min(1e6);
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                // no descent possible at machine precision
                return Ok((it, true));
            }
        }
    }
    Ok((solver.inner_max_iter, false))
}

/// Solves the modified Chebyshev problem for one preference vector.
pub fn solve<P: MultiObjective + ?Sized>(
    problem: &P,
    cfg: &ScalarizationConfig,
    x0: &[f64],
    solver: &AlSolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if problem.n_objectives() != cfg.n_objectives() {
        return Err(Error::Domain(format!(
            "problem has {} objectives, preference has {}",
            problem.n_objectives(),
            cfg.n_objectives()
        )));
    }
    if x0.len() != problem.dim() {
        return Err(Error::Shape(format!(
            "start point has dimension {}, problem expects {}",
            x0.len(),
            problem.dim()
        )));
    }
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut state = ALState::new(cfg.n_objectives(), solver.mu0)?.with_form(solver.form);
    let mut history = Vec::new();
    let mut converged = false;
    for outer in 0..solver.max_outer {
        let f = problem.evaluate(&x);
        check_dims(&f, cfg)?;
        cfg.reference.check_below(&f)?;
        state.reset_t(&f, cfg);
        let mut t = state.t;
        let (inner_iters, inner_ok) = minimize_inner(problem, cfg, &state, &mut x, &mut t, solver)?;
        state.t = t;
        let f = problem.evaluate(&x);
        cfg.reference.check_below(&f)?;
        let h = constraints_unchecked(&f, t, cfg);
        let max_h = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        history.push(OuterRecord {
            iteration: outer + 1,
            objectives: f.clone(),
            t,
            max_h,
            mu: state.mu,
            inner_iterations: inner_iters,
        });
        let next = al_update(&h, &state, &solver.schedule)?;
        let residual = kkt_residual(&h, &ALState { mu: state.mu, ..next.clone() });
        state = next;
        if inner_ok && residual <= solver.kkt_tol {
            converged = true;
            break;
        }
    }
    let objectives = problem.evaluate(&x);
    let h = constraints_unchecked(&objectives, state.t, cfg);
    let max_h = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SolveReport {
        kkt_residual: kkt_residual(&h, &state),
        x,
        objectives,
        t: state.t,
        lambda: state.lambda,
        mu: state.mu,
        max_h,
        outer_iterations: history.len(),
        converged,
        history,
    })
}

/// Minimises the weighted sum `sum_j k_j f_j` with the same proximal
/// gradient iteration and budget as the inner loop of [`solve`].
pub fn solve_weighted_sum<P: MultiObjective + ?Sized>(
    problem: &P,
    k: &[f64],
    x0: &[f64],
    solver: &AlSolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k.len() != problem.n_objectives() || x0.len() != problem.dim() {
        return Err(Error::Shape("weights or start point do not match the problem".into()));
    }
    let value = |x: &[f64]| -> Result<f64> {
        let f = problem.evaluate(x);
        let v: f64 = f.iter().zip(k).map(|(a, b)| a * b).sum();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric("objective evaluated to a non-finite value".into()))
        }
    };
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut cur = value(&x)?;
    let mut step = solver.initial_step;
    'outer: for _ in 0..solver.inner_max_iter {
        let mut g = vec![0.0; x.len()];
        for (j, w) in k.iter().enumerate() {
            if let Some(gj) = problem.gradient(j, &x) {
                for (a, b) in g.iter_mut().zip(&gj) {
                    *a += w * b;
                }
            }
        }
        loop {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            problem.prox(&mut xn, k, step);
            problem.project(&mut xn);
            let d2: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
            if d2.sqrt() / step <= solver.inner_tol {
                break 'outer;
            }
            let next = value(&xn)?;
            if next <= cur - 1e-4 * d2 / step {
                x = xn;
                cur = next;
                step = (step * 2.0).min(1e6);
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break 'outer;
            }
        }
    }
    let f = problem.evaluate(&x);
    Ok((x, f))
}
