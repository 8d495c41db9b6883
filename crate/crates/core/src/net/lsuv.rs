//! Layer-sequential unit-variance initialization.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{trace_for, ForwardTrace, Model, ModelSpec};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsuvConfig {
    pub tol: f64,
    pub max_passes: usize,
    /// Constant every bias starts from.
    pub bias: f64,
}

impl Default for LsuvConfig {
    fn default() -> Self {
        Self {
            tol: 0.05,
            max_passes: 10,
            bias: 0.01,
        }
    }
}

/// Gaussian matrix whose rows or columns (whichever are fewer) are
/// orthonormal.
pub fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let tall = rows >= cols;
    let (n_vec, dim) = if tall { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while basis.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| if tall { basis[j][i] } else { basis[i][j] })
}

fn variance(a: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let mean = a.sum() / n;
    a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn preactivation<'a>(model: &Model, tr: &'a ForwardTrace, layer: usize) -> &'a Array2<f64> {
    if let Some(j) = model.index.shared.iter().position(|&l| l == layer) {
        return &tr.shared.pre[j];
    }
    for (i, task) in tr.tasks.iter().enumerate() {
        if let (Some(mon), Some(idx)) = (&task.monitor, model.index.monitors.get(i)) {
            if let Some(j) = idx.iter().position(|&l| l == layer) {
                return &mon.pre[j];
            }
        }
        if let Some(j) = model.index.heads[i].iter().position(|&l| l == layer) {
            return &task.head.pre[j];
        }
    }
    unreachable!("layer {layer} belongs to no stack")
}

/// Orthonormal start, then each layer in forward order is rescaled until
/// the variance of its pre-activations on `probe` is within `tol` of one.
pub fn lsuv_init(spec: &ModelSpec, probe: ArrayView2<f64>, cfg: &LsuvConfig, seed: u64) -> Result<Model> {
    if probe.nrows() == 0 {
        return domain("LSUV probe batch is empty");
    }
    if !(cfg.tol > 0.0) || cfg.max_passes == 0 {
        return domain("LSUV needs tol > 0 and max_passes >= 1");
    }
    let mut model = Model::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in &mut model.params.layers {
        let (r, c) = l.weight.dim();
        l.weight = orthonormal(r, c, &mut rng);
        l.bias.fill(cfg.bias);
    }
    for li in 0..model.params.layers.len() {
        let mut ok = false;
        for _ in 0..cfg.max_passes {
            let tr = trace_for(&model, probe)?;
            let var = variance(preactivation(&model, &tr, li));
            if !(var > 1e-300) || !var.is_finite() {
                return domain(format!(
                    "layer {} has zero output variance on the probe batch",
                    model.params.layers[li].name
                ));
            }
            if (var - 1.0).abs() <= cfg.tol {
                ok = true;
                break;
            }
            let s = var.sqrt();
            model.params.layers[li].weight.mapv_inplace(|w| w / s);
        }
        if !ok {
            let tr = trace_for(&model, probe)?;
            let var = variance(preactivation(&model, &tr, li));
            if (var - 1.0).abs() > cfg.tol {
                return Err(Error::Numeric(format!(
                    "LSUV did not reach unit variance on layer {} (variance {var})",
                    model.params.layers[li].name
                )));
            }
        }
    }
    Ok(model)
}

/// Pre-activation variance of every layer on `probe`, in layer order.
pub fn layer_variances(model: &Model, probe: ArrayView2<f64>) -> Result<Vec<f64>> {
    let tr = trace_for(model, probe)?;
    Ok((0..model.params.layers.len())
        .map(|li| variance(preactivation(model, &tr, li)))
        .collect())
}
