//! Group ordered weighted L1 (GrOWL) sparsity objective.
//!
//! The penalty of a layer weighs its row norms, sorted in descending order,
//! with a nonincreasing pattern `theta`. Rows correspond to neurons of the
//! previous layer, so zeroing a row removes that neuron's outgoing
//! connections.

use ndarray::{Array2, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// 2-D weight matrix with one row per neuron of the previous layer.
pub type LayerMatrix = Array2<f64>;

/// Nonincreasing, nonnegative weights with a strictly positive head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GrowlPattern(Vec<f64>);

impl GrowlPattern {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        match theta.first() {
            None => return domain("GrOWL pattern is empty"),
            Some(&t) if !(t > 0.0) => return domain("GrOWL pattern needs theta[0] > 0"),
            _ => {}
        }
        if theta.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return domain("GrOWL pattern entries must be finite and >= 0");
        }
        if theta.windows(2).any(|w| w[1] > w[0]) {
            return domain("GrOWL pattern must be nonincreasing");
        }
        Ok(Self(theta))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for GrowlPattern {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GrowlPattern> for Vec<f64> {
    fn from(p: GrowlPattern) -> Self {
        p.0
    }
}

/// Row-norm threshold and the tolerated per-model / per-layer sparsity range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityBudget {
    pub tau: f64,
    pub eta_min: f64,
    pub eta_max: f64,
}

impl SparsityBudget {
    pub fn new(tau: f64, eta_min: f64, eta_max: f64) -> Result<Self> {
        let b = Self {
            tau,
            eta_min,
            eta_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return domain("tau must be >= 0");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.eta_min) || !unit.contains(&self.eta_max) {
            return domain("sparsity rates must lie in [0, 1]");
        }
        if self.eta_min > self.eta_max {
            return domain("eta_min must not exceed eta_max");
        }
        Ok(())
    }
}

/// Spike coefficients shared by every regularized layer, with optional
/// per-layer overrides keyed by layer name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowlConfig {
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub overrides: std::collections::BTreeMap<String, (f64, f64)>,
}

impl Default for GrowlConfig {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: 1.0,
            overrides: Default::default(),
        }
    }
}

impl GrowlConfig {
    pub fn pattern_for(&self, layer: &str, rows: usize) -> Result<GrowlPattern> {
        let (b1, b2) = self
            .overrides
            .get(layer)
            .copied()
            .unwrap_or((self.beta1, self.beta2));
        growl_spike(b1, b2, rows)
    }
}

/// Spike pattern `(beta1 + beta2, beta2, ..., beta2)` of length `n`.
pub fn growl_spike(beta1: f64, beta2: f64, n: usize) -> Result<GrowlPattern> {
    if !(beta1 > 0.0) || !(beta2 > 0.0) {
        return domain(format!("spike betas must be > 0, got ({beta1}, {beta2})"));
    }
    if n == 0 {
        return domain("spike pattern needs n >= 1");
    }
    let mut theta = vec![beta2; n];
    theta[0] = beta1 + beta2;
    GrowlPattern::new(theta)
}

pub fn row_norms(w: ArrayView2<f64>) -> Vec<f64> {
    w.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Indices ordering `v` descending; ties keep the original index order.
fn descending_order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    idx
}

fn check_len(w: ArrayView2<f64>, theta: &GrowlPattern) -> Result<()> {
    if theta.len() != w.nrows() {
        return Err(Error::Shape(format!(
            "GrOWL pattern has {} weights, layer has {} rows",
            theta.len(),
            w.nrows()
        )));
    }
    Ok(())
}

/// `sum_i theta_i * ||w_[i]||`, rows sorted by decreasing norm.
pub fn growl_penalty_layer(w: ArrayView2<f64>, theta: &GrowlPattern) -> Result<f64> {
    check_len(w, theta)?;
    let mut norms = row_norms(w);
    norms.sort_by(|a, b| b.total_cmp(a));
    Ok(norms.iter().zip(theta.values()).map(|(n, t)| n * t).sum())
}

/// Sum of the layer penalties.
pub fn growl_total<'a, I>(layers: I) -> Result<f64>
where
    I: IntoIterator<Item = (ArrayView2<'a, f64>, &'a GrowlPattern)>,
{
    layers
        .into_iter()
        .map(|(w, theta)| growl_penalty_layer(w, theta))
        .sum()
}

/// Reshapes a `[Fw, Fh, N_prev, N]` kernel into `N_prev x (Fw*Fh*N)`.
/// Row `i` collects every weight leaving input channel `i`, ordered by
/// `(fw, fh, n)`.
pub fn reshape_conv(w4: &Array4<f64>) -> LayerMatrix {
    let (fw, fh, np, n) = w4.dim();
    let permuted = w4.view().permuted_axes([2, 0, 1, 3]);
    let flat: Vec<f64> = permuted.iter().copied().collect();
    Array2::from_shape_vec((np, fw * fh * n), flat).expect("element count preserved")
}

/// Inverse of [`reshape_conv`].
pub fn unreshape_conv(w: ArrayView2<f64>, fw: usize, fh: usize) -> Result<Array4<f64>> {
    let (np, cols) = w.dim();
    if fw == 0 || fh == 0 || cols % (fw * fh) != 0 {
        return Err(Error::Shape(format!(
            "{cols} columns do not split into {fw}x{fh} kernels"
        )));
    }
    let n = cols / (fw * fh);
    let flat: Vec<f64> = w.iter().copied().collect();
    let a = Array4::from_shape_vec((np, fw, fh, n), flat).expect("element count preserved");
    Ok(a.permuted_axes([1, 2, 0, 3]).as_standard_layout().into_owned())
}

/// Dynamic-rank variant of [`reshape_conv`] for tensors loaded from files.
pub fn reshape_conv_dyn(shape: &[usize], data: &[f64]) -> Result<LayerMatrix> {
    if shape.len() != 4 {
        return domain(format!("conv weights must have rank 4, got rank {}", shape.len()));
    }
    let w4 = Array4::from_shape_vec((shape[0], shape[1], shape[2], shape[3]), data.to_vec())
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(reshape_conv(&w4))
}

/// Proximal map of the ordered weighted L1 norm with weights `w` on a
/// nonnegative vector `b`: sort, subtract the weights, project onto the
/// nonincreasing cone by pool-adjacent-violators, clip at zero, unsort.
pub fn prox_owl_nonneg(b: &[f64], w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.len(), w.len());
    let order = descending_order(b);
    // blocks of (sum, count) whose means are nonincreasing
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(b.len());
    for (rank, &i) in order.iter().enumerate() {
        blocks.push((b[i] - w[rank], 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (s0 + s1, c0 + c1);
        }
    }
    let mut out = vec![0.0; b.len()];
    let mut rank = 0;
    for (s, c) in blocks {
        let v = (s / c as f64).max(0.0);
        for _ in 0..c {
            out[order[rank]] = v;
            rank += 1;
        }
    }
    out
}

/// Proximal map of `step * G_theta` on a weight matrix. Row norms go
/// through [`prox_owl_nonneg`] with weights `step * theta`; each row is
/// rescaled to its new norm. Zero rows stay zero.
pub fn prox_growl(w: ArrayView2<f64>, theta: &GrowlPattern, step: f64) -> Result<LayerMatrix> {
    check_len(w, theta)?;
    if !(step > 0.0) || !step.is_finite() {
        return domain(format!("prox step must be > 0, got {step}"));
    }
    let norms = row_norms(w);
    let weights: Vec<f64> = theta.values().iter().map(|t| t * step).collect();
    let shrunk = prox_owl_nonneg(&norms, &weights);
    let mut out = w.to_owned();
    for ((mut row, old), new) in out.axis_iter_mut(Axis(0)).zip(&norms).zip(&shrunk) {
        if *old == 0.0 || *new == 0.0 {
            row.fill(0.0);
        } else {
            let scale = new / old;
            row.mapv_inplace(|v| v * scale);
        }
    }
    Ok(out)
}

/// Zeroes every row whose norm is below `tau` and reports which rows
/// changed from nonzero to zero.
pub fn threshold_rows(w: ArrayView2<f64>, tau: f64) -> Result<(LayerMatrix, Vec<usize>)> {
    if !(tau >= 0.0) {
        return domain(format!("tau must be >= 0, got {tau}"));
    }
    let mut out = w.to_owned();
    let mut zeroed = Vec::new();
    for (i, (mut row, n)) in out.axis_iter_mut(Axis(0)).zip(row_norms(w)).enumerate() {
        if n < tau {
            if n > 0.0 {
                zeroed.push(i);
            }
            row.fill(0.0);
        }
    }
    Ok((out, zeroed))
}

/// Like [`threshold_rows`], but zeroes rows in order of increasing norm and
/// stops once the layer holds `max_zero_rows` all-zero rows.
pub fn threshold_rows_capped(
    w: ArrayView2<f64>,
    tau: f64,
    max_zero_rows: usize,
) -> Result<(LayerMatrix, Vec<usize>)> {
    if !(tau >= 0.0) {
        return domain(format!("tau must be >= 0, got {tau}"));
    }
    let norms = row_norms(w);
    let mut zero = norms.iter().filter(|n| **n == 0.0).count();
    let mut order: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] > 0.0 && norms[i] < tau).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut out = w.to_owned();
    let mut zeroed = Vec::new();
    for i in order {
        if zero >= max_zero_rows {
            break;
        }
        out.row_mut(i).fill(0.0);
        zeroed.push(i);
        zero += 1;
    }
    zeroed.sort_unstable();
    Ok((out, zeroed))
}

/// Fraction of all-zero rows.
pub fn layer_sparsity(w: ArrayView2<f64>) -> f64 {
    if w.nrows() == 0 {
        return 0.0;
    }
    let zero = w.rows().into_iter().filter(|r| r.iter().all(|v| *v == 0.0)).count();
    zero as f64 / w.nrows() as f64
}

/// Indices of all-zero rows.
pub fn zero_rows(w: ArrayView2<f64>) -> Vec<usize> {
    w.rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().all(|v| *v == 0.0))
        .map(|(i, _)| i)
        .collect()
}
