//! Augmented Lagrangian objective and multiplier updates for the
//! inequality-constrained Chebyshev problem.

use serde::{Deserialize, Serialize};

use super::scalarize::constraints_unchecked;
use super::types::ScalarizationConfig;
use crate::error::{domain, Error, Result};

/// Which augmented Lagrangian is minimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlForm {
    /// Inequality form with nonnegative multipliers:
    /// `t + 1/(2 mu) * sum_i (max(0, lambda_i + mu H_i)^2 - lambda_i^2)`,
    /// updated by `lambda <- max(0, lambda + mu H)`.
    #[default]
    Clamped,
    /// `t + lambda^T H + mu/2 ||H||^2`, updated by `lambda <- lambda + mu H`.
    Literal,
}

/// Outer-loop state of the augmented Lagrangian method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALState {
    pub t: f64,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub iteration: usize,
    #[serde(default)]
    pub form: AlForm,
}

impl ALState {
    /// Zero multipliers, `t = 0`.
    pub fn new(n_constraints: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return domain(format!("penalty coefficient mu must be > 0, got {mu}"));
        }
        Ok(Self {
            t: 0.0,
            lambda: vec![0.0; n_constraints],
            mu,
            iteration: 0,
            form: AlForm::Clamped,
        })
    }

    pub fn with_form(mut self, form: AlForm) -> Self {
        self.form = form;
        self
    }

    /// Sets `t = max_i (H_i + t)` so every constraint is inactive or tight.
    pub fn reset_t(&mut self, l: &[f64], cfg: &ScalarizationConfig) {
        self.t = super::scalarize::chebyshev_value(l, cfg);
    }
}

/// Per-iteration scaling of `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSchedule {
    /// `mu <- mu * mu_factor` after each outer iteration. Values below one
    /// weaken the penalty, values above one grow it.
    pub mu_factor: f64,
}

impl Default for MultiplierSchedule {
    fn default() -> Self {
        Self { mu_factor: 0.5 }
    }
}

/// Value of the augmented Lagrangian at constraint residual `h`.
pub fn al_loss(h: &[f64], state: &ALState) -> Result<f64> {
    check(h, state)?;
    let mu = state.mu;
    let extra: f64 = match state.form {
        AlForm::Clamped => h
            .iter()
            .zip(&state.lambda)
            .map(|(h, l)| {
                let s = (l + mu * h).max(0.0);
                (s * s - l * l) / (2.0 * mu)
            })
            .sum(),
        AlForm::Literal => h
            .iter()
            .zip(&state.lambda)
            .map(|(h, l)| l * h + 0.5 * mu * h * h)
            .sum(),
    };
    let v = state.t + extra;
    if !v.is_finite() {
        return Err(Error::Numeric("augmented Lagrangian is not finite".into()));
    }
    Ok(v)
}

/// `dL_A / dH_i`.
pub fn al_grad_h(h: &[f64], state: &ALState) -> Vec<f64> {
    let mu = state.mu;
    h.iter()
        .zip(&state.lambda)
        .map(|(h, l)| match state.form {
            AlForm::Clamped => (l + mu * h).max(0.0),
            AlForm::Literal => l + mu * h,
        })
        .collect()
}

/// Sensitivities of `L_A` with respect to the objectives and to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlSensitivity {
    /// `dL_A / dL_j` for every objective.
    pub objective: Vec<f64>,
    /// `dL_A / dt`.
    pub t: f64,
}

/// Chains `dL_A/dH` through `H_i = k_i[(L_i - a_i) + eps sum_j (L_j - a_j)] - t`.
pub fn al_sensitivity(h: &[f64], state: &ALState, cfg: &ScalarizationConfig) -> AlSensitivity {
    let g = al_grad_h(h, state);
    let k = cfg.preference.values();
    let shared: f64 = g.iter().zip(k).map(|(g, k)| g * k).sum::<f64>() * cfg.epsilon_disturbance;
    AlSensitivity {
        objective: g.iter().zip(k).map(|(g, k)| g * k + shared).collect(),
        t: 1.0 - g.iter().sum::<f64>(),
    }
}

/// Evaluates `L_A` directly from objective values.
pub fn al_value(l: &[f64], state: &ALState, cfg: &ScalarizationConfig) -> Result<f64> {
    al_loss(&constraints_unchecked(l, state.t, cfg), state)
}

/// Multiplier ascent followed by the `mu` schedule.
pub fn al_update(h: &[f64], state: &ALState, schedule: &MultiplierSchedule) -> Result<ALState> {
    check(h, state)?;
    if !(schedule.mu_factor > 0.0) || !schedule.mu_factor.is_finite() {
        return domain("mu_factor must be finite and > 0");
    }
    let mu = state.mu;
    let lambda = h
        .iter()
        .zip(&state.lambda)
        .map(|(h, l)| match state.form {
            AlForm::Clamped => (l + mu * h).max(0.0),
            AlForm::Literal => l + mu * h,
        })
        .collect();
    Ok(ALState {
        t: state.t,
        lambda,
        mu: mu * schedule.mu_factor,
        iteration: state.iteration + 1,
        form: state.form,
    })
}

/// KKT residual `max_i |max(H_i, -lambda_i / mu)|` of the inequality form.
pub fn kkt_residual(h: &[f64], state: &ALState) -> f64 {
    h.iter()
        .zip(&state.lambda)
        .map(|(h, l)| h.max(-l / state.mu).abs())
        .fold(0.0, f64::max)
}

/// Minimiser over `t` of the augmented Lagrangian, given the constraint
/// values without `t`, i.e. `shifted_i = H_i + t`. At the returned point
/// `dL_A/dt = 0`.
pub fn optimal_t(shifted: &[f64], state: &ALState) -> Result<f64> {
    check(shifted, state)?;
    if shifted.is_empty() {
        return domain("no constraints to balance t against");
    }
    let mu = state.mu;
    let a: Vec<f64> = shifted.iter().zip(&state.lambda).map(|(s, l)| l + mu * s).collect();
    match state.form {
        AlForm::Literal => Ok((a.iter().sum::<f64>() - 1.0) / (a.len() as f64 * mu)),
        AlForm::Clamped => {
            // sum_i max(0, a_i - mu t) = 1 is decreasing in t; walk the
            // breakpoints a_i / mu from the top.
            let mut order: Vec<usize> = (0..a.len()).collect();
            order.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
            let mut sum = 0.0;
            for (j, &i) in order.iter().enumerate() {
                sum += a[i];
                let t = (sum - 1.0) / ((j + 1) as f64 * mu);
                let next = order.get(j + 1).map_or(f64::NEG_INFINITY, |&n| a[n] / mu);
                if t >= next {
                    return Ok(t);
                }
            }
            unreachable!("the last segment extends to -inf")
        }
    }
}

fn check(h: &[f64], state: &ALState) -> Result<()> {
    if h.len() != state.lambda.len() {
        return domain(format!(
            "constraint stack has {} entries, multipliers have {}",
            h.len(),
            state.lambda.len()
        ));
    }
    if !(state.mu > 0.0) {
        return domain("penalty coefficient mu must be > 0");
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("constraint residual is not finite".into()));
    }
    Ok(())
}
