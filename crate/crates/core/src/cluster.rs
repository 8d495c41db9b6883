//! Row similarity, affinity-propagation clustering and parameter tying.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::growl::row_norms;

/// Pairwise similarity between the nonzero rows of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// `s[(a, b)]` compares rows `rows[a]` and `rows[b]`.
    pub s: Array2<f64>,
    /// Original row index of each entry; pruned rows are absent.
    pub rows: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with a `row` column followed by one column per kept row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["row".to_string()];
        header.extend(self.rows.iter().map(|r| format!("r{r}")));
        wtr.write_record(&header)?;
        for (a, r) in self.rows.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(self.s.row(a).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `S(i, j) = w_i . w_j / max(||w_i||^2, ||w_j||^2)` over the nonzero rows.
pub fn row_similarity(w: ArrayView2<f64>) -> Result<SimilarityMatrix> {
    let sq: Vec<f64> = w.rows().into_iter().map(|r| r.dot(&r)).collect();
    let rows: Vec<usize> = (0..w.nrows()).filter(|&i| sq[i] > 0.0).collect();
    if rows.is_empty() {
        return domain("row similarity needs at least one nonzero row");
    }
    let n = rows.len();
    let mut s = Array2::zeros((n, n));
    for a in 0..n {
        for b in a..n {
            let (i, j) = (rows[a], rows[b]);
            let v = if a == b {
                1.0
            } else {
                let dot = w.row(i).dot(&w.row(j));
                (dot / sq[i].max(sq[j])).clamp(-1.0, 1.0)
            };
            s[[a, b]] = v;
            s[[b, a]] = v;
        }
    }
    Ok(SimilarityMatrix { s, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApConfig {
    /// Diagonal of the similarity matrix; larger values yield more clusters.
    pub preference: f64,
    /// In `[0.5, 1)`.
    pub damping: f64,
    pub max_iter: usize,
    /// Exemplar set must be stable this many iterations to count as converged.
    pub convergence_iter: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            preference: 0.7,
            damping: 0.9,
            max_iter: 200,
            convergence_iter: 15,
        }
    }
}

impl ApConfig {
    /// Preference profile for closely related tasks.
    pub fn aligned_tasks() -> Self {
        Self::default()
    }

    /// Preference profile for dissimilar tasks.
    pub fn dissimilar_tasks() -> Self {
        Self {
            preference: 0.8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return domain(format!("damping must lie in [0.5, 1), got {}", self.damping));
        }
        if self.max_iter == 0 || self.convergence_iter == 0 {
            return domain("max_iter and convergence_iter must be >= 1");
        }
        if !self.preference.is_finite() {
            return domain("preference must be finite");
        }
        Ok(())
    }
}

/// Result of affinity propagation over `n` items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApResult {
    /// Exemplar index of each item.
    pub labels: Vec<usize>,
    /// Sorted exemplar indices.
    pub exemplars: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

/// Affinity propagation on a square similarity matrix. The diagonal of `s`
/// is replaced by `cfg.preference`.
///
/// A fixed-seed perturbation of relative size ~1e-16 breaks exact ties, so
/// the output is a deterministic function of the input. The exemplar set
/// found by message passing (every item, if none emerges) is then refined
/// by a local search on [`net_similarity`]. `converged` reports whether the
/// message passing itself settled.
pub fn affinity_propagation(s: ArrayView2<f64>, cfg: &ApConfig) -> Result<ApResult> {
    cfg.validate()?;
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::Shape(format!("similarity must be square and nonempty, got {:?}", s.dim())));
    }
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| s[[i, j]])
        .collect();
    if off.iter().all(|v| *v == off.first().copied().unwrap_or(0.0)) {
        // indistinguishable items: one cluster unless self-preference wins
        let all_own = n == 1 || cfg.preference > off[0];
        let exemplars: Vec<usize> = if all_own { (0..n).collect() } else { vec![0] };
        let labels = if all_own { (0..n).collect() } else { vec![0; n] };
        return Ok(ApResult {
            labels,
            exemplars,
            converged: true,
            iterations: 0,
        });
    }
    let mut sim = s.to_owned();
    for i in 0..n {
        sim[[i, i]] = cfg.preference;
    }
    let base = sim.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for v in sim.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += (f64::EPSILON * *v + f64::MIN_POSITIVE * 100.0) * z;
    }

    let d = cfg.damping;
    let mut r = Array2::<f64>::zeros((n, n));
    let mut a = Array2::<f64>::zeros((n, n));
    let mut history = vec![vec![false; n]; cfg.convergence_iter];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        for i in 0..n {
            let (mut best, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = a[[i, k]] + sim[[i, k]];
                if v > best {
                    second = best;
                    best = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let m = if k == arg { second } else { best };
                r[[i, k]] = d * r[[i, k]] + (1.0 - d) * (sim[[i, k]] - m);
            }
        }
        for k in 0..n {
            let col: f64 = (0..n)
                .map(|i| if i == k { r[[k, k]] } else { r[[i, k]].max(0.0) })
                .sum();
            for i in 0..n {
                let own = if i == k { r[[k, k]] } else { r[[i, k]].max(0.0) };
                let v = col - own;
                let new = if i == k { v } else { v.min(0.0) };
                a[[i, k]] = d * a[[i, k]] + (1.0 - d) * new;
            }
        }
        let e: Vec<bool> = (0..n).map(|k| a[[k, k]] + r[[k, k]] > 0.0).collect();
        let any = e.iter().any(|x| *x);
        history[it % cfg.convergence_iter] = e;
        if it + 1 >= cfg.convergence_iter {
            let stable = (0..n).all(|k| {
                let c = history.iter().filter(|h| h[k]).count();
                c == 0 || c == cfg.convergence_iter
            });
            if stable && any {
                converged = true;
                break;
            }
        }
    }

    let exemplars: Vec<usize> = (0..n).filter(|&k| a[[k, k]] + r[[k, k]] > 0.0).collect();
    let (exemplars, converged) = if exemplars.is_empty() {
        ((0..n).collect(), false)
    } else {
        (exemplars, converged)
    };
    let exemplars = improve_exemplars(base.view(), cfg.preference, exemplars);
    Ok(ApResult {
        labels: assign(base.view(), &exemplars),
        exemplars,
        converged,
        iterations,
    })
}

/// Best-improvement local search on [`net_similarity`] over single-item
/// additions, removals and swaps, plus two-for-one and one-for-two
/// exemplar exchanges. Ties keep the current set.
fn improve_exemplars(s: ArrayView2<f64>, preference: f64, mut ex: Vec<usize>) -> Vec<usize> {
    let n = s.nrows();
    let mut value = net_similarity(s, preference, &ex);
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut consider = |cand: Vec<usize>| {
            let v = net_similarity(s, preference, &cand);
            if v > best.as_ref().map_or(value, |b| b.0) + 1e-12 {
                best = Some((v, cand));
            }
        };
        for i in 0..n {
            match ex.binary_search(&i) {
                Ok(pos) if ex.len() > 1 => {
                    let mut c = ex.clone();
                    c.remove(pos);
                    consider(c);
                }
                Ok(_) => {}
                Err(pos) => {
                    let mut c = ex.clone();
                    c.insert(pos, i);
                    consider(c);
                }
            }
        }
        for out in 0..ex.len() {
            for i in (0..n).filter(|i| ex.binary_search(i).is_err()) {
                let mut c = ex.clone();
                c[out] = i;
                c.sort_unstable();
                consider(c);
            }
        }
        let outside: Vec<usize> = (0..n).filter(|i| ex.binary_search(i).is_err()).collect();
        // merge two exemplars into one item, or split one into two
        for a in 0..ex.len() {
            for b in a + 1..ex.len() {
                for &i in outside.iter().chain([ex[a], ex[b]].iter()) {
                    let mut c: Vec<usize> = ex.iter().copied().filter(|&e| e != ex[a] && e != ex[b]).collect();
                    c.push(i);
                    c.sort_unstable();
                    consider(c);
                }
            }
            for (p, &i) in outside.iter().enumerate() {
                for &j in &outside[p + 1..] {
                    let mut c = ex.clone();
                    c[a] = i;
                    c.push(j);
                    c.sort_unstable();
                    consider(c);
                }
            }
        }
        match best {
            Some((v, c)) => {
                value = v;
                ex = c;
            }
            None => return ex,
        }
    }
}

fn assign(s: ArrayView2<f64>, exemplars: &[usize]) -> Vec<usize> {
    (0..s.nrows())
        .map(|i| {
            if exemplars.contains(&i) {
                return i;
            }
            let mut best = exemplars[0];
            for &e in &exemplars[1..] {
                if s[[i, e]] > s[[i, best]] {
                    best = e;
                }
            }
            best
        })
        .collect()
}

/// Net similarity of an exemplar set: preferences of the exemplars plus each
/// other item's best similarity to an exemplar.
pub fn net_similarity(s: ArrayView2<f64>, preference: f64, exemplars: &[usize]) -> f64 {
    (0..s.nrows())
        .map(|i| {
            if exemplars.contains(&i) {
                preference
            } else {
                exemplars
                    .iter()
                    .map(|&e| s[[i, e]])
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .sum()
}

/// Clusters of one layer's rows. `labels[i]` is the exemplar row of row `i`,
/// or `None` for a pruned (all-zero) row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub exemplars: Vec<usize>,
    pub converged: bool,
}

impl ClusterAssignment {
    /// Every nonzero row in its own cluster.
    pub fn singletons(w: ArrayView2<f64>) -> Self {
        let norms = row_norms(w);
        let labels: Vec<Option<usize>> = norms
            .iter()
            .enumerate()
            .map(|(i, n)| (*n > 0.0).then_some(i))
            .collect();
        let exemplars = labels.iter().flatten().copied().collect();
        Self {
            labels,
            exemplars,
            converged: true,
        }
    }

    /// Clusters with more than one member.
    pub fn tied_groups(&self) -> Vec<Vec<usize>> {
        self.exemplars
            .iter()
            .map(|&e| {
                self.labels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l == Some(e))
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>()
            })
            .filter(|g| g.len() > 1)
            .collect()
    }

    pub fn has_ties(&self) -> bool {
        !self.tied_groups().is_empty()
    }
}

/// Row similarity followed by affinity propagation over the nonzero rows.
pub fn cluster_layer(w: ArrayView2<f64>, cfg: &ApConfig) -> Result<ClusterAssignment> {
    let sim = row_similarity(w)?;
    let ap = affinity_propagation(sim.s.view(), cfg)?;
    let mut labels = vec![None; w.nrows()];
    for (a, &row) in sim.rows.iter().enumerate() {
        labels[row] = Some(sim.rows[ap.labels[a]]);
    }
    Ok(ClusterAssignment {
        labels,
        exemplars: ap.exemplars.iter().map(|&a| sim.rows[a]).collect(),
        converged: ap.converged,
    })
}

/// Replaces each clustered row by the mean of its cluster. Pruned rows stay
/// zero; clusters whose rows are already identical are left untouched.
pub fn tie_clusters(w: ArrayView2<f64>, c: &ClusterAssignment) -> Result<Array2<f64>> {
    if c.labels.len() != w.nrows() {
        return Err(Error::Shape(format!(
            "assignment covers {} rows, layer has {}",
            c.labels.len(),
            w.nrows()
        )));
    }
    if let Some(bad) = c
        .labels
        .iter()
        .flatten()
        .find(|l| **l >= w.nrows() || !c.exemplars.contains(l))
    {
        return domain(format!("label {bad} is not an exemplar of this layer"));
    }
    let mut out = w.to_owned();
    for (i, l) in c.labels.iter().enumerate() {
        if l.is_none() {
            out.row_mut(i).fill(0.0);
        }
    }
    for group in c.tied_groups() {
        let first = w.row(group[0]);
        if group.iter().all(|&i| w.row(i) == first) {
            continue;
        }
        let mean = w.select(Axis(0), &group).mean_axis(Axis(0)).expect("nonempty group");
        for &i in &group {
            out.row_mut(i).assign(&mean);
        }
    }
    Ok(out)
}
