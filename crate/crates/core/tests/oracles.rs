//! Independent brute-force oracles for the core operations.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use pareto_forge::cluster::{affinity_propagation, net_similarity, row_similarity, tie_clusters, ApConfig, ClusterAssignment};
use pareto_forge::growl::{growl_spike, prox_growl, prox_owl_nonneg, zero_rows, GrowlConfig, SparsityBudget};
use pareto_forge::moo::{
    chebyshev_select, dominates, ALState, PreferenceVector, ReferencePoint, ScalarizationConfig,
};
use pareto_forge::net::{backward, growl_patterns, AlObjective, Architecture, Model, ModelSpec, TaskBatch};
use pareto_forge::trainer::{compute_metrics, sparsify};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `1/2 |x - b|^2 + sum_i w_i |x|_[i]`.
fn owl_prox_objective(x: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|p, q| q.total_cmp(p));
    let pen: f64 = mags.iter().zip(w).map(|(m, w)| m * w).sum();
    0.5 * x.iter().zip(b).map(|(x, b)| (x - b).powi(2)).sum::<f64>() + pen
}

/// Minimiser found by enumerating every split of the norm-sorted
/// coordinates into consecutive equal-value blocks and every zero tail.
fn owl_prox_enumerated(b: &[f64], w: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[j].total_cmp(&b[i]));
    let z: Vec<f64> = order.iter().enumerate().map(|(r, &i)| b[i] - w[r]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        for live in 0..=n {
            let mut sorted = vec![0.0; n];
            let mut start = 0;
            for end in 1..=live {
                if end == live || cuts & (1 << (end - 1)) != 0 {
                    let mean = z[start..end].iter().sum::<f64>() / (end - start) as f64;
                    sorted[start..end].fill(mean.max(0.0));
                    start = end;
                }
            }
            let mut x = vec![0.0; n];
            for (r, &i) in order.iter().enumerate() {
                x[i] = sorted[r];
            }
            let f = owl_prox_objective(&x, b, w);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    best.unwrap().1
}

#[test]
fn prox_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let n = rng.random_range(1..=7);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let theta = growl_spike(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), n).unwrap();
        let step = rng.random_range(0.1..2.0);
        let w: Vec<f64> = theta.values().iter().map(|t| t * step).collect();
        let fast = prox_owl_nonneg(&b, &w);
        let oracle = owl_prox_enumerated(&b, &w);
        let (ff, fo) = (owl_prox_objective(&fast, &b, &w), owl_prox_objective(&oracle, &b, &w));
        assert!(ff <= fo + 1e-12, "case {case}: {ff} > {fo}");
        for (x, y) in fast.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9, "case {case}: {fast:?} vs {oracle:?}");
        }
        // the matrix prox only rescales rows to these norms
        let mut m = Array2::zeros((n, 2));
        for (i, v) in b.iter().enumerate() {
            m[[i, 0]] = v * 0.6;
            m[[i, 1]] = v * 0.8;
        }
        let p = prox_growl(m.view(), &theta, step).unwrap();
        for (row, want) in p.axis_iter(Axis(0)).zip(&fast) {
            assert!((row.dot(&row).sqrt() - want).abs() < 1e-12);
        }
    }
}

fn exhaustive_exemplars(s: &Array2<f64>, pref: f64) -> f64 {
    let n = s.nrows();
    (1u32..(1 << n))
        .map(|mask| {
            let ex: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            net_similarity(s.view(), pref, &ex)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn affinity_propagation_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..40 {
        let n = rng.random_range(2..=8);
        let w = Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0));
        let s = row_similarity(w.view()).unwrap().s;
        let cfg = ApConfig {
            preference: rng.random_range(0.0..1.0),
            ..ApConfig::default()
        };
        let ap = affinity_propagation(s.view(), &cfg).unwrap();
        let got = net_similarity(s.view(), cfg.preference, &ap.exemplars);
        let best = exhaustive_exemplars(&s, cfg.preference);
        assert!((got - best).abs() < 1e-9, "case {case}: {got} vs {best}");
    }
}

fn small_spec() -> ModelSpec {
    ModelSpec {
        architecture: Architecture::Mdmtn,
        input_dim: 4,
        shared: vec![6, 5],
        monitors: vec![5],
        heads: vec![],
        classes: vec![3, 2],
    }
}

#[test]
fn metrics_match_direct_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..30 {
        let mut model = Model::random(&small_spec(), case).unwrap();
        let mut clusters = BTreeMap::new();
        let mut expected_unique = 0usize;
        for layer in &mut model.params.layers {
            for v in layer.bias.iter_mut() {
                if rng.random_bool(0.3) {
                    *v = 0.0;
                }
            }
            expected_unique += layer.bias.iter().filter(|v| **v != 0.0).count();
            let rows = layer.weight.nrows();
            for r in 0..rows {
                if layer.growl && rng.random_bool(0.3) {
                    layer.weight.row_mut(r).fill(0.0);
                }
            }
            if !layer.growl || rng.random_bool(0.3) {
                expected_unique += layer.weight.iter().filter(|v| **v != 0.0).count();
                continue;
            }
            // random grouping of the surviving rows around random exemplars
            let live: Vec<usize> = (0..rows).filter(|&r| layer.weight.row(r).iter().any(|v| *v != 0.0)).collect();
            let mut labels = vec![None; rows];
            let mut exemplars = Vec::new();
            for &r in &live {
                if exemplars.is_empty() || rng.random_bool(0.4) {
                    exemplars.push(r);
                    labels[r] = Some(r);
                } else {
                    labels[r] = Some(exemplars[rng.random_range(0..exemplars.len())]);
                }
            }
            let c = ClusterAssignment {
                labels,
                exemplars: exemplars.clone(),
                converged: true,
            };
            layer.weight = tie_clusters(layer.weight.view(), &c).unwrap();
            for &e in &exemplars {
                expected_unique += layer.weight.row(e).iter().filter(|v| **v != 0.0).count();
            }
            clusters.insert(layer.name.clone(), c);
        }
        expected_unique += model.params.alphas.iter().flatten().filter(|v| **v != 0.0).count();

        let flat = model.params.to_flat();
        let zero = flat.iter().filter(|v| **v == 0.0).count();
        let m = compute_metrics(&model, &clusters);
        let total = flat.len() as f64;
        assert_eq!(m.sr, zero as f64 / total);
        assert_eq!(m.cr, total / expected_unique as f64, "case {case}");
        assert_eq!(m.ps, (flat.len() - zero) as f64 / expected_unique as f64);
        assert!((m.cr - m.ps / (1.0 - m.sr)).abs() < 1e-12);
    }
}

#[test]
fn al_gradient_matches_central_differences() {
    let spec = small_spec();
    let model = Model::random(&spec, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0));
    let labels = vec![
        (0..12).map(|i| i % 3).collect(),
        (0..12).map(|i| (i / 3) % 2).collect(),
    ];
    let batch = TaskBatch::new(x, labels).unwrap();
    let cfg = ScalarizationConfig::new(PreferenceVector::new(vec![0.1, 0.5, 0.4]).unwrap())
        .with_reference(ReferencePoint(vec![-0.5; 3]));
    let patterns = growl_patterns(&model.params, &GrowlConfig::default()).unwrap();
    let mut state = ALState::new(3, 0.5).unwrap();
    state.lambda = vec![0.3, 0.3, 0.4];
    let obj = AlObjective {
        cfg: &cfg,
        state: &state,
        patterns: &patterns,
        growl_subgradient: true,
        exact_t: false,
    };
    let t = 0.2;
    let (_, grad) = backward(&model, &batch, t, &obj).unwrap();
    let g = grad.to_flat();
    let base = model.params.to_flat();
    let value = |flat: &[f64]| {
        let mut m = model.clone();
        m.params.set_flat(flat).unwrap();
        pareto_forge::net::al_objective(&m, &batch, t, &obj).unwrap().value
    };
    assert!(base.len() <= 500);
    for i in 0..base.len() {
        let h = 1e-6;
        let mut p = base.clone();
        let mut q = base.clone();
        p[i] += h;
        q[i] -= h;
        let fd = (value(&p) - value(&q)) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
        assert!(rel < 1e-4, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
    }
}

#[test]
fn sparsify_leaves_unflagged_layers_alone() {
    let model = Model::random(&small_spec(), 4).unwrap();
    let patterns = growl_patterns(&model.params, &GrowlConfig::default()).unwrap();
    let budget = SparsityBudget::new(0.5, 0.0, 0.6).unwrap();
    let mut after = model.clone();
    sparsify(&mut after, &patterns, 0.3, &budget).unwrap();
    let mut changed = false;
    for (a, b) in model.params.layers.iter().zip(&after.params.layers) {
        if a.growl {
            changed |= a.weight != b.weight;
            let cap = (0.6 * a.weight.nrows() as f64).floor() as usize;
            assert!(zero_rows(b.weight.view()).len() <= cap.max(zero_rows(a.weight.view()).len()));
        } else {
            assert_eq!(a.weight, b.weight, "{}", a.name);
        }
        assert_eq!(a.bias, b.bias);
    }
    assert!(changed);
    assert_eq!(model.params.alphas, after.params.alphas);
}

/// Strict improvement in every coordinate.
fn strictly_dominates(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| a < b)
}

#[test]
fn chebyshev_minimiser_is_pareto_within_the_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        // coarse grid values make weak ties common
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(1..6) as f64 / 2.0).collect())
            .collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let k = PreferenceVector::normalized(&raw).unwrap();
        let plain = ScalarizationConfig::new(k.clone()).with_epsilon(0.0);
        let i = chebyshev_select(&pts, &plain).unwrap();
        assert!(pts.iter().all(|q| !strictly_dominates(q, &pts[i])));
        let modified = ScalarizationConfig::new(k);
        let j = chebyshev_select(&pts, &modified).unwrap();
        assert!(pts.iter().all(|q| !dominates(q, &pts[j]).unwrap()));
    }
}
