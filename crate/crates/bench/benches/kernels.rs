use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use pareto_forge::cluster::{affinity_propagation, row_similarity, ApConfig};
use pareto_forge::growl::{growl_spike, prox_growl, GrowlConfig};
use pareto_forge::moo::{eps_nondominance_filter, pareto_filter, ALState, PreferenceVector, ScalarizationConfig};
use pareto_forge::net::{backward, growl_patterns, AlObjective, Model, ModelSpec, TaskBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn prox(c: &mut Criterion) {
    let mut g = c.benchmark_group("prox_growl");
    for rows in [64, 256, 1024] {
        let w = random_matrix(rows, 64, 1);
        let theta = growl_spike(0.1, 0.05, rows).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(rows), &w, |b, w| {
            b.iter(|| prox_growl(black_box(w.view()), &theta, 0.1).unwrap())
        });
    }
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let mut g = c.benchmark_group("affinity_propagation");
    g.sample_size(20);
    for rows in [16, 64, 128] {
        let s = row_similarity(random_matrix(rows, 32, 2).view()).unwrap().s;
        let cfg = ApConfig::aligned_tasks();
        g.bench_with_input(BenchmarkId::from_parameter(rows), &s, |b, s| {
            b.iter(|| affinity_propagation(black_box(s.view()), &cfg).unwrap())
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let spec = ModelSpec::mdmtn(16, vec![4, 4]);
    let model = Model::random(&spec, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(32, 16, 4);
    let labels = vec![(0..32).map(|_| rng.random_range(0..4)).collect(), (0..32).map(|_| rng.random_range(0..4)).collect()];
    let batch = TaskBatch::new(x, labels).unwrap();
    let cfg = ScalarizationConfig::new(PreferenceVector::new(vec![0.001, 0.4995, 0.4995]).unwrap());
    let patterns = growl_patterns(&model.params, &GrowlConfig::default()).unwrap();
    let state = ALState::new(3, 10.0).unwrap();
    let obj = AlObjective {
        cfg: &cfg,
        state: &state,
        patterns: &patterns,
        growl_subgradient: true,
        exact_t: true,
    };
    c.bench_function("forward batch 32", |b| b.iter(|| model.forward(black_box(batch.inputs.view())).unwrap()));
    c.bench_function("forward+backward batch 32", |b| {
        b.iter(|| backward(black_box(&model), &batch, 0.0, &obj).unwrap())
    });
}

fn filters(c: &mut Criterion) {
    let mut g = c.benchmark_group("dominance");
    for n in [100, 1000] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        g.bench_with_input(BenchmarkId::new("pareto_filter", n), &pts, |b, p| {
            b.iter(|| pareto_filter(black_box(p)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("eps_filter_0.01", n), &pts, |b, p| {
            b.iter(|| eps_nondominance_filter(black_box(p), 0.01).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, prox, clustering, network, filters);
criterion_main!(benches);
