use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{domain, Result};

/// Mean cross-entropy of softmax(logits) against `labels`, and the gradient
/// of that mean with respect to the logits.
pub(crate) fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return domain(format!("{} labels for {n} rows of logits", labels.len()));
    }
    if n == 0 {
        return domain("cross-entropy of an empty batch");
    }
    let mut grad = Array2::zeros((n, c));
    let mut total = 0.0;
    for (i, (row, mut g)) in logits.outer_iter().zip(grad.outer_iter_mut()).enumerate() {
        let y = labels[i];
        if y >= c {
            return domain(format!("label {y} out of range for {c} classes (sample {i})"));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[y];
        for (gj, v) in g.iter_mut().zip(row.iter()) {
            *gj = (v - log_z).exp() / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// Mean cross-entropy per task.
pub fn task_losses<L: AsRef<[usize]>>(logits: &[Array2<f64>], labels: &[L]) -> Result<Vec<f64>> {
    if logits.len() != labels.len() {
        return domain(format!("{} logit blocks for {} label sets", logits.len(), labels.len()));
    }
    logits
        .iter()
        .zip(labels)
        .map(|(z, y)| cross_entropy(z.view(), y.as_ref()).map(|(l, _)| l))
        .collect()
}

/// Index of the largest logit per row; the first maximum wins ties.
pub fn predictions(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
