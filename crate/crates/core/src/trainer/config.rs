use serde::{Deserialize, Serialize};

use crate::cluster::ApConfig;
use crate::error::{domain, Result};
use crate::growl::{growl_spike, GrowlConfig, SparsityBudget};
use crate::moo::AlForm;
use crate::net::{LsuvConfig, OptimizerKind};

/// Outer iterations, epochs per iteration and the learning-rate schedule of
/// one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub iterations: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplies `lr` after every iteration.
    pub lr_factor: f64,
}

impl PhaseConfig {
    fn validate(&self, name: &str) -> Result<()> {
        if self.iterations == 0 || self.epochs == 0 {
            return domain(format!("{name}: iterations and epochs must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return domain(format!("{name}: lr must be > 0"));
        }
        if !(self.lr_factor > 0.0) || !self.lr_factor.is_finite() {
            return domain(format!("{name}: lr_factor must be > 0"));
        }
        Ok(())
    }
}

/// How the scalarization variable `t` follows the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TUpdate {
    /// `t` is one more coordinate for the optimizer.
    #[default]
    Optimizer,
    /// `t` is set to the exact minimiser of the augmented Lagrangian on
    /// every minibatch.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub mu0: f64,
    pub mu_factor: f64,
    #[serde(default)]
    pub al_form: AlForm,
    #[serde(default)]
    pub t_update: TUpdate,
    pub budget: SparsityBudget,
    pub growl: GrowlConfig,
    pub clustering: ApConfig,
    #[serde(default)]
    pub lsuv: LsuvConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl TrainConfig {
    /// Values used for MDMTN on the two-digit image benchmark.
    pub fn multimnist() -> Self {
        let phase = |iterations| PhaseConfig {
            iterations,
            epochs: 3,
            lr: 2.5e-3,
            lr_factor: 0.5,
        };
        Self {
            phase1: phase(3),
            phase2: phase(10),
            batch_size: 256,
            optimizer: OptimizerKind::default(),
            mu0: 2.5e-5,
            mu_factor: 0.5,
            al_form: AlForm::Clamped,
            t_update: TUpdate::Optimizer,
            budget: SparsityBudget {
                tau: 1e-3,
                eta_min: 0.2,
                eta_max: 0.8,
            },
            growl: GrowlConfig::default(),
            clustering: ApConfig::aligned_tasks(),
            lsuv: LsuvConfig::default(),
            seed: 0,
        }
    }

    /// Values used for MDMTN on the digit-over-photo benchmark.
    pub fn cifar10mnist() -> Self {
        let phase = |iterations| PhaseConfig {
            iterations,
            epochs: 3,
            lr: 1e-4,
            lr_factor: 0.98,
        };
        Self {
            phase1: phase(3),
            phase2: phase(10),
            mu0: 1e-4,
            budget: SparsityBudget {
                tau: 1e-3,
                eta_min: 0.1,
                eta_max: 0.3,
            },
            clustering: ApConfig::dissimilar_tasks(),
            ..Self::multimnist()
        }
    }

    /// Desk-scale profile for the synthetic two-task dataset.
    pub fn synthetic() -> Self {
        Self {
            phase1: PhaseConfig {
                iterations: 3,
                epochs: 10,
                lr: 2.5e-3,
                lr_factor: 0.8,
            },
            phase2: PhaseConfig {
                iterations: 10,
                epochs: 3,
                lr: 2.5e-3,
                lr_factor: 0.8,
            },
            batch_size: 32,
            mu0: 10.0,
            t_update: TUpdate::Exact,
            budget: SparsityBudget {
                tau: 0.2,
                eta_min: 0.2,
                eta_max: 0.8,
            },
            growl: GrowlConfig {
                beta1: 4.0,
                beta2: 4.0,
                overrides: Default::default(),
            },
            ..Self::multimnist()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.phase1.validate("phase1")?;
        self.phase2.validate("phase2")?;
        if self.batch_size == 0 {
            return domain("batch_size must be >= 1");
        }
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return domain("mu0 must be > 0");
        }
        if !(self.mu_factor > 0.0) || !self.mu_factor.is_finite() {
            return domain("mu_factor must be > 0");
        }
        self.budget.validate()?;
        growl_spike(self.growl.beta1, self.growl.beta2, 1)?;
        for (name, (b1, b2)) in &self.growl.overrides {
            growl_spike(*b1, *b2, 1).map_err(|e| crate::Error::Domain(format!("growl override {name}: {e}")))?;
        }
        self.clustering.validate()?;
        if !(self.lsuv.tol > 0.0) || self.lsuv.max_passes == 0 {
            return domain("lsuv needs tol > 0 and max_passes >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_profiles() {
        let a = TrainConfig::multimnist();
        assert_eq!((a.phase1.iterations, a.phase2.iterations, a.phase1.epochs), (3, 10, 3));
        assert_eq!(a.mu0, 2.5e-5);
        assert_eq!((a.budget.eta_min, a.budget.eta_max), (0.2, 0.8));
        let b = TrainConfig::cifar10mnist();
        assert_eq!((b.mu0, b.phase1.lr_factor), (1e-4, 0.98));
        assert_eq!((b.budget.eta_min, b.budget.eta_max), (0.1, 0.3));
        assert_eq!(b.clustering.preference, 0.8);
        a.validate().unwrap();
        b.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = TrainConfig::synthetic();
        let s = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::synthetic();
        c.phase1.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::synthetic();
        c.budget.eta_min = 0.9;
        assert!(c.validate().is_err());
    }
}
