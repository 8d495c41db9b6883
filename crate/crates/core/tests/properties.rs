use std::collections::BTreeMap;

use ndarray::Array2;
use pareto_forge::cluster::{cluster_layer, tie_clusters, ApConfig};
use pareto_forge::growl::{growl_spike, prox_growl, row_norms};
use pareto_forge::moo::{
    chebyshev_value, dominates, pareto_filter, wc_constraints, PreferenceVector, ReferencePoint,
    ScalarizationConfig,
};
use pareto_forge::net::{Architecture, Model, ModelSpec};
use pareto_forge::trainer::compute_metrics;
use proptest::prelude::*;

fn points(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // small integer grid so that duplicates and ties occur
    prop::collection::vec(prop::collection::vec((0i32..6).prop_map(f64::from), dim), 1..30)
}

fn config(k: &[f64], a: &[f64], eps: f64) -> ScalarizationConfig {
    ScalarizationConfig::new(PreferenceVector::normalized(k).unwrap())
        .with_reference(ReferencePoint(a.to_vec()))
        .with_epsilon(eps)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #[test]
    fn filter_is_permutation_invariant(pts in points(3), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<&Vec<f64>> = order.iter().map(|&i| &pts[i]).collect();
        let mut a: Vec<Vec<f64>> = pareto_filter(&pts).unwrap().into_iter().map(|i| pts[i].clone()).collect();
        let mut b: Vec<Vec<f64>> = pareto_filter(&shuffled).unwrap().into_iter().map(|i| shuffled[i].clone()).collect();
        a.sort_by(|p, q| p.partial_cmp(q).unwrap());
        b.sort_by(|p, q| p.partial_cmp(q).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn filter_is_idempotent_and_sound(pts in points(3)) {
        let kept: Vec<&Vec<f64>> = pareto_filter(&pts).unwrap().into_iter().map(|i| &pts[i]).collect();
        prop_assert!(!kept.is_empty());
        prop_assert_eq!(pareto_filter(&kept).unwrap().len(), kept.len());
        for p in &pts {
            prop_assert!(!kept.iter().any(|q| dominates(p, q).unwrap()));
        }
    }

    #[test]
    fn zero_disturbance_is_plain_chebyshev(
        l in prop::collection::vec(0.0f64..5.0, 3),
        k in prop::collection::vec(0.01f64..1.0, 3),
        t in -2.0f64..2.0,
    ) {
        let cfg = config(&k, &[-1.0; 3], 0.0);
        let kn = cfg.preference.values().to_vec();
        let h = wc_constraints(&l, t, &cfg).unwrap();
        for i in 0..3 {
            prop_assert!((h[i] - (kn[i] * (l[i] + 1.0) - t)).abs() < 1e-12);
        }
        let plain = (0..3).map(|i| kn[i] * (l[i] + 1.0)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((chebyshev_value(&l, &cfg) - plain).abs() < 1e-12);
        // the disturbance only ever raises the value
        prop_assert!(chebyshev_value(&l, &config(&k, &[-1.0; 3], 1e-4)) >= plain);
    }

    #[test]
    fn prox_shrinks_rows_and_keeps_their_order(
        w in matrix(6, 3),
        b1 in 0.01f64..1.0,
        b2 in 0.01f64..1.0,
        step in 0.01f64..2.0,
    ) {
        let theta = growl_spike(b1, b2, 6).unwrap();
        let p = prox_growl(w.view(), &theta, step).unwrap();
        let (before, after) = (row_norms(w.view()), row_norms(p.view()));
        for i in 0..6 {
            prop_assert!(after[i] <= before[i] + 1e-12);
            if after[i] > 0.0 {
                // each row keeps its direction
                let scale = after[i] / before[i];
                for j in 0..3 {
                    prop_assert!((p[[i, j]] - scale * w[[i, j]]).abs() < 1e-12);
                }
            }
            for j in 0..6 {
                if before[i] > before[j] {
                    prop_assert!(after[i] >= after[j] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn tying_is_idempotent(w in matrix(7, 4), pref in 0.0f64..1.0) {
        let cfg = ApConfig { preference: pref, ..ApConfig::default() };
        let c = cluster_layer(w.view(), &cfg).unwrap();
        let once = tie_clusters(w.view(), &c).unwrap();
        prop_assert_eq!(tie_clusters(once.view(), &c).unwrap(), once);
    }

    #[test]
    fn compression_identity(seed in 0u64..1000, prune in prop::collection::vec(any::<bool>(), 8)) {
        let spec = ModelSpec {
            architecture: Architecture::Mdmtn,
            input_dim: 5,
            shared: vec![8, 6],
            monitors: vec![6],
            heads: vec![],
            classes: vec![3, 3],
        };
        let mut model = Model::random(&spec, seed).unwrap();
        let mut clusters = BTreeMap::new();
        for layer in model.params.layers.iter_mut().filter(|l| l.growl) {
            for (r, &p) in prune.iter().enumerate().take(layer.weight.nrows() - 1) {
                if p {
                    layer.weight.row_mut(r).fill(0.0);
                }
            }
            let c = cluster_layer(layer.weight.view(), &ApConfig::aligned_tasks()).unwrap();
            layer.weight = tie_clusters(layer.weight.view(), &c).unwrap();
            clusters.insert(layer.name.clone(), c);
        }
        let m = compute_metrics(&model, &clusters);
        prop_assert!((0.0..1.0).contains(&m.sr));
        prop_assert!(m.cr >= 1.0 && m.ps >= 1.0);
        prop_assert!((m.cr - m.ps / (1.0 - m.sr)).abs() < 1e-9 * m.cr);
    }
}
