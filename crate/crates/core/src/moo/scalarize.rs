//! Modified weighted Chebyshev constraints and the finite-set scalar values
//! used to pick points out of a candidate set.

use super::types::ScalarizationConfig;
use crate::error::{domain, Result};

/// Constraint stack `H(x, t)` of the modified Chebyshev problem:
/// `H_i = k_i [(L_i - a_i) + eps * sum_j (L_j - a_j)] - t`.
///
/// Fails with a domain error naming the first index where the reference
/// point is not strictly below `l`.
pub fn wc_constraints(l: &[f64], t: f64, cfg: &ScalarizationConfig) -> Result<Vec<f64>> {
    check_dims(l, cfg)?;
    cfg.reference.check_below(l)?;
    Ok(constraints_unchecked(l, t, cfg))
}

pub(crate) fn check_dims(l: &[f64], cfg: &ScalarizationConfig) -> Result<()> {
    if l.len() != cfg.preference.len() {
        return domain(format!(
            "objective vector has {} entries, preference has {}",
            l.len(),
            cfg.preference.len()
        ));
    }
    Ok(())
}

/// Same as [`wc_constraints`] without the reference-point check.
pub(crate) fn constraints_unchecked(l: &[f64], t: f64, cfg: &ScalarizationConfig) -> Vec<f64> {
    let a = cfg.reference.values();
    let k = cfg.preference.values();
    let total: f64 = l.iter().zip(a).map(|(v, a)| v - a).sum();
    let eps = cfg.epsilon_disturbance;
    l.iter()
        .zip(a)
        .zip(k)
        .map(|((v, a), k)| k * ((v - a) + eps * total) - t)
        .collect()
}

/// `max_i k_i [(L_i - a_i) + eps * sum_j (L_j - a_j)]`, the value of `t`
/// that makes every constraint inactive or tight.
pub fn chebyshev_value(l: &[f64], cfg: &ScalarizationConfig) -> f64 {
    constraints_unchecked(l, 0.0, cfg)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the point minimising the Chebyshev value. Ties go to the lowest
/// index.
pub fn chebyshev_select<P: AsRef<[f64]>>(points: &[P], cfg: &ScalarizationConfig) -> Option<usize> {
    argmin(points.iter().map(|p| chebyshev_value(p.as_ref(), cfg)))
}

/// Index of the point minimising the weighted sum `sum_i k_i L_i`.
pub fn weighted_sum_select<P: AsRef<[f64]>>(points: &[P], k: &[f64]) -> Option<usize> {
    argmin(
        points
            .iter()
            .map(|p| p.as_ref().iter().zip(k).map(|(v, w)| v * w).sum::<f64>()),
    )
}

fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
