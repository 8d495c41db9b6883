use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Optimizer choice as it appears in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl OptimizerKind {
    pub fn build(&self, n: usize) -> Optimizer {
        match *self {
            Self::Adam { beta1, beta2, eps } => Optimizer::Adam(Adam {
                beta1,
                beta2,
                eps,
                m: vec![0.0; n],
                v: vec![0.0; n],
                steps: 0,
            }),
            Self::Sgd { momentum } => Optimizer::Sgd(Sgd {
                momentum,
                velocity: vec![0.0; n],
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

fn check(params: &[f64], grad: &[f64], state: usize, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return domain(format!("learning rate must be > 0, got {lr}"));
    }
    if params.len() != grad.len() || params.len() != state {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradient entries, optimizer sized for {}",
            params.len(),
            grad.len(),
            state
        )));
    }
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut Adam, lr: f64) -> Result<()> {
    check(params, grad, state.m.len(), lr)?;
    state.steps += 1;
    let c1 = 1.0 - state.beta1.powi(state.steps as i32);
    let c2 = 1.0 - state.beta2.powi(state.steps as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// `v <- momentum v + g; x <- x - lr v`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], state: &mut Sgd, lr: f64) -> Result<()> {
    check(params, grad, state.velocity.len(), lr)?;
    for i in 0..params.len() {
        state.velocity[i] = state.momentum * state.velocity[i] + grad[i];
        params[i] -= lr * state.velocity[i];
    }
    Ok(())
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        match self {
            Self::Adam(s) => adam_step(params, grad, s, lr),
            Self::Sgd(s) => sgd_step(params, grad, s, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut opt = OptimizerKind::Sgd { momentum: 0.0 }.build(3);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let Optimizer::Adam(mut s) = OptimizerKind::default().build(3) else {
            unreachable!()
        };
        let g = [0.5, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        for (x, g) in p.iter().zip(g) {
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-15, "{x} vs {expected}");
        }
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = OptimizerKind::Sgd { momentum: 0.9 }.build(1);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0], 1.0).unwrap();
        opt.step(&mut p, &[1.0], 1.0).unwrap();
        assert!((p[0] + 2.9).abs() < 1e-15);
    }

    #[test]
    fn bad_lr_and_shapes_rejected() {
        let mut opt = OptimizerKind::default().build(2);
        let mut p = vec![0.0; 2];
        assert!(opt.step(&mut p, &[0.0; 2], 0.0).is_err());
        assert!(opt.step(&mut p, &[0.0; 2], -1.0).is_err());
        assert!(opt.step(&mut p, &[0.0; 3], 0.1).is_err());
    }
}
