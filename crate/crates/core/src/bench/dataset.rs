use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::net::TaskBatch;
use crate::trainer::DataSplits;

/// Two classification tasks over Gaussian features. Task 1 class means live
/// on `task1_dims`, task 2 means on `task2_dims`; the overlap of the two
/// ranges is the shared subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub input_dim: usize,
    pub classes: [usize; 2],
    pub samples: usize,
    pub task1_dims: (usize, usize),
    pub task2_dims: (usize, usize),
    /// Distance of every class mean from the origin.
    pub separation: f64,
    pub noise: f64,
    /// Train and validation fractions; the rest is test.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            classes: [4, 4],
            samples: 2000,
            task1_dims: (0, 10),
            task2_dims: (6, 16),
            separation: 4.0,
            noise: 1.0,
            split: (0.7, 0.15),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.iter().any(|&c| c < 2) {
            return domain("every task needs at least two classes");
        }
        for (a, b) in [self.task1_dims, self.task2_dims] {
            if a >= b || b > self.input_dim {
                return domain(format!("feature range {a}..{b} is empty or exceeds input_dim"));
            }
        }
        if self.task1_dims.1 <= self.task2_dims.0 || self.task2_dims.1 <= self.task1_dims.0 {
            return domain("task feature ranges must overlap");
        }
        if !(self.separation > 0.0) || !(self.noise > 0.0) {
            return domain("separation and noise must be > 0");
        }
        let (tr, va) = self.split;
        if !(tr > 0.0 && va > 0.0 && tr + va < 1.0) {
            return domain("split fractions must be positive and leave a test share");
        }
        let n_test = self.samples - self.n_train() - self.n_val();
        if self.n_train() == 0 || self.n_val() == 0 || n_test == 0 {
            return domain("too few samples for a three-way split");
        }
        Ok(())
    }

    fn n_train(&self) -> usize {
        (self.samples as f64 * self.split.0).round() as usize
    }

    fn n_val(&self) -> usize {
        (self.samples as f64 * self.split.1).round() as usize
    }
}

/// Full dataset before splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTwoTaskDataset {
    pub config: SyntheticConfig,
    pub data: TaskBatch,
    /// Class means per task, each `classes x input_dim`.
    pub means: [Array2<f64>; 2],
}

fn class_means(rng: &mut ChaCha8Rng, k: usize, dims: (usize, usize), d: usize, radius: f64) -> Array2<f64> {
    let mut m = Array2::zeros((k, d));
    for c in 0..k {
        let mut norm = 0.0;
        for j in dims.0..dims.1 {
            let v: f64 = StandardNormal.sample(rng);
            m[[c, j]] = v;
            norm += v * v;
        }
        m.row_mut(c).mapv_inplace(|v| v * radius / norm.sqrt());
    }
    m
}

impl SyntheticTwoTaskDataset {
    pub fn generate(cfg: &SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.input_dim;
        let means = [
            class_means(&mut rng, cfg.classes[0], cfg.task1_dims, d, cfg.separation),
            class_means(&mut rng, cfg.classes[1], cfg.task2_dims, d, cfg.separation),
        ];
        let mut x = Array2::zeros((cfg.samples, d));
        let mut labels = vec![Vec::with_capacity(cfg.samples), Vec::with_capacity(cfg.samples)];
        for i in 0..cfg.samples {
            let y = [rng.random_range(0..cfg.classes[0]), rng.random_range(0..cfg.classes[1])];
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = means[0][[y[0], j]] + means[1][[y[1], j]] + cfg.noise * e;
            }
            labels[0].push(y[0]);
            labels[1].push(y[1]);
        }
        Ok(Self {
            config: cfg.clone(),
            data: TaskBatch::new(x, labels)?,
            means,
        })
    }

    /// Seeded shuffle into train, validation and test splits.
    pub fn splits(&self) -> DataSplits {
        let cfg = &self.config;
        let mut order: Vec<usize> = (0..cfg.samples).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed));
        let (a, b) = (cfg.n_train(), cfg.n_train() + cfg.n_val());
        DataSplits {
            train: self.data.select(&order[..a]),
            val: self.data.select(&order[a..b]),
            test: self.data.select(&order[b..]),
        }
    }
}

/// Generates the dataset and splits it.
pub fn make_dataset(cfg: &SyntheticConfig) -> Result<DataSplits> {
    Ok(SyntheticTwoTaskDataset::generate(cfg)?.splits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let c = SyntheticConfig::default();
        let a = SyntheticTwoTaskDataset::generate(&c).unwrap();
        let b = SyntheticTwoTaskDataset::generate(&c).unwrap();
        assert_eq!(a, b);
        let s = a.splits();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1400, 300, 300));
    }

    #[test]
    fn label_marginals_near_uniform() {
        let c = SyntheticConfig {
            samples: 10_000,
            ..Default::default()
        };
        let d = SyntheticTwoTaskDataset::generate(&c).unwrap();
        for (t, y) in d.data.labels.iter().enumerate() {
            let k = c.classes[t];
            for class in 0..k {
                let share = y.iter().filter(|v| **v == class).count() as f64 / y.len() as f64;
                assert!((share - 1.0 / k as f64).abs() < 0.05, "task {t} class {class}: {share}");
            }
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        let bad = [
            SyntheticConfig { classes: [1, 4], ..Default::default() },
            SyntheticConfig { task2_dims: (10, 16), ..Default::default() },
            SyntheticConfig { samples: 3, ..Default::default() },
        ];
        for c in bad {
            assert!(SyntheticTwoTaskDataset::generate(&c).is_err());
        }
    }
}
