use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::growl::{growl_spike, prox_owl_nonneg};
use crate::moo::MultiObjective;

/// A multi-objective test problem, optionally with a known Pareto front.
pub trait AnalyticProblem: MultiObjective + Send + Sync {
    fn name(&self) -> &str;
    /// Whether the Pareto front bounds a convex region of criterion space.
    fn convex_front(&self) -> bool;
    /// Exact front membership within `tol`, when the front is known.
    fn on_front(&self, _f: &[f64], _tol: f64) -> Option<bool> {
        None
    }
    /// Euclidean distance from `f` to the known front.
    fn front_distance(&self, _f: &[f64]) -> Option<f64> {
        None
    }
    /// Seeded start point inside the feasible set.
    fn start(&self, seed: u64) -> Vec<f64>;
    /// Reference point used when a sweep does not set one.
    fn reference(&self) -> Vec<f64> {
        vec![0.0; self.n_objectives()]
    }
}

/// Offset below the ideal point of the bi-objective problems, whose ideal
/// values are attained at the ends of the front.
pub const UTOPIA_MARGIN: f64 = 0.1;

/// `f1 = |x - e1|^2`, `f2 = |x + e1|^2`. The front is the image of the
/// segment between `-e1` and `e1`: `((1 - s)^2, (1 + s)^2)` for `s in [-1, 1]`.
#[derive(Debug, Clone)]
pub struct Convex2 {
    pub dim: usize,
}

impl Default for Convex2 {
    fn default() -> Self {
        Self { dim: 2 }
    }
}

impl MultiObjective for Convex2 {
    fn n_objectives(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let rest: f64 = x[1..].iter().map(|v| v * v).sum();
        vec![(x[0] - 1.0).powi(2) + rest, (x[0] + 1.0).powi(2) + rest]
    }
    fn gradient(&self, j: usize, x: &[f64]) -> Option<Vec<f64>> {
        let shift = if j == 0 { -1.0 } else { 1.0 };
        let mut g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        g[0] = 2.0 * (x[0] + shift);
        Some(g)
    }
}

impl AnalyticProblem for Convex2 {
    fn name(&self) -> &str {
        "convex2"
    }
    fn reference(&self) -> Vec<f64> {
        vec![-UTOPIA_MARGIN; 2]
    }
    fn convex_front(&self) -> bool {
        true
    }
    fn on_front(&self, f: &[f64], tol: f64) -> Option<bool> {
        if f.len() != 2 || f.iter().any(|v| *v < -tol || *v > 4.0 + tol) {
            return Some(false);
        }
        Some((f[0].max(0.0).sqrt() + f[1].max(0.0).sqrt() - 2.0).abs() <= tol)
    }
    fn front_distance(&self, f: &[f64]) -> Option<f64> {
        if self.on_front(f, 0.0) == Some(true) {
            return Some(0.0);
        }
        Some(curve_distance(f, |s| [(1.0 - s).powi(2), (1.0 + s).powi(2)], -1.0, 1.0))
    }
    fn start(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

/// `x in [0, 1]`, `f1 = x`, `f2 = 1 - x^2`. Every feasible point is Pareto
/// optimal and the front is concave.
#[derive(Debug, Clone, Default)]
pub struct Concave2;

impl MultiObjective for Concave2 {
    fn n_objectives(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], 1.0 - x[0] * x[0]]
    }
    fn gradient(&self, j: usize, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![if j == 0 { 1.0 } else { -2.0 * x[0] }])
    }
    fn project(&self, x: &mut [f64]) {
        x[0] = x[0].clamp(0.0, 1.0);
    }
}

impl AnalyticProblem for Concave2 {
    fn name(&self) -> &str {
        "concave2"
    }
    fn reference(&self) -> Vec<f64> {
        vec![-UTOPIA_MARGIN; 2]
    }
    fn convex_front(&self) -> bool {
        false
    }
    fn on_front(&self, f: &[f64], tol: f64) -> Option<bool> {
        if f.len() != 2 || f[0] < -tol || f[0] > 1.0 + tol {
            return Some(false);
        }
        Some((f[1] - (1.0 - f[0] * f[0])).abs() <= tol)
    }
    fn front_distance(&self, f: &[f64]) -> Option<f64> {
        if self.on_front(f, 0.0) == Some(true) {
            return Some(0.0);
        }
        Some(curve_distance(f, |s| [s, 1.0 - s * s], 0.0, 1.0))
    }
    fn start(&self, seed: u64) -> Vec<f64> {
        vec![ChaCha8Rng::seed_from_u64(seed).random_range(0.0..1.0)]
    }
}

/// GrOWL-Spike weights of the [`Sparse3`] norm. Large enough that the
/// sparsity objective competes with the task losses across the `k0` grid.
pub const SPARSE3_BETA: f64 = 20.0;

/// Three objectives over `x in R^d`: an ordered weighted L1 norm of `x`
/// (index 0) and two least-squares tasks whose true coefficients share part
/// of their support.
#[derive(Debug, Clone)]
pub struct Sparse3 {
    a: [Array2<f64>; 2],
    b: [Array1<f64>; 2],
    theta: Vec<f64>,
}

impl Sparse3 {
    /// Random instance with `dim` unknowns and `rows` observations per task.
    pub fn new(dim: usize, rows: usize, seed: u64) -> Result<Self> {
        if dim < 4 || rows < dim {
            return domain("sparse3 needs dim >= 4 and rows >= dim");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = dim / 2;
        let supports = [0..half + 1, half - 1..dim.min(2 * half)];
        let mut a = Vec::with_capacity(2);
        let mut b = Vec::with_capacity(2);
        for support in supports {
            let mut truth = Array1::<f64>::zeros(dim);
            for j in support {
                truth[j] = rng.random_range(1.0..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
            let m = Array2::from_shape_fn((rows, dim), |_| StandardNormal.sample(&mut rng));
            let noise = Array1::from_shape_fn(rows, |_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                0.3 * e
            });
            b.push(m.dot(&truth) + noise);
            a.push(m);
        }
        let theta = growl_spike(SPARSE3_BETA, SPARSE3_BETA, dim)?.values().to_vec();
        let [a0, a1]: [Array2<f64>; 2] = a.try_into().expect("two tasks");
        let [b0, b1]: [Array1<f64>; 2] = b.try_into().expect("two tasks");
        Ok(Self {
            a: [a0, a1],
            b: [b0, b1],
            theta,
        })
    }

    fn residual(&self, task: usize, x: &[f64]) -> Array1<f64> {
        self.a[task].dot(&Array1::from(x.to_vec())) - &self.b[task]
    }

    fn owl(&self, x: &[f64]) -> f64 {
        let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        mags.sort_by(|p, q| q.total_cmp(p));
        mags.iter().zip(&self.theta).map(|(m, t)| m * t).sum()
    }
}

impl Default for Sparse3 {
    fn default() -> Self {
        Self::new(10, 40, 0).expect("valid default instance")
    }
}

impl MultiObjective for Sparse3 {
    fn n_objectives(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        self.theta.len()
    }
    fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let n = self.b[0].len() as f64;
        let task = |i| self.residual(i, x).mapv(|r| r * r).sum() / (2.0 * n);
        vec![self.owl(x), task(0), task(1)]
    }
    fn gradient(&self, j: usize, x: &[f64]) -> Option<Vec<f64>> {
        if j == 0 {
            return None;
        }
        let n = self.b[0].len() as f64;
        let r = self.residual(j - 1, x);
        Some(self.a[j - 1].t().dot(&r).mapv(|v| v / n).to_vec())
    }
    fn prox(&self, x: &mut [f64], weights: &[f64], step: f64) {
        let s = step * weights[0];
        if !(s > 0.0) {
            return;
        }
        let mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let w: Vec<f64> = self.theta.iter().map(|t| t * s).collect();
        for (v, m) in x.iter_mut().zip(prox_owl_nonneg(&mags, &w)) {
            *v = v.signum() * m;
        }
    }
}

impl AnalyticProblem for Sparse3 {
    fn name(&self) -> &str {
        "sparse3"
    }
    fn convex_front(&self) -> bool {
        true
    }
    fn start(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim())
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                0.1 * e
            })
            .collect()
    }
}

/// Every catalogued problem with its default instance.
pub fn analytic_problems() -> Vec<Box<dyn AnalyticProblem>> {
    vec![
        Box::new(Convex2::default()),
        Box::new(Concave2),
        Box::new(Sparse3::default()),
    ]
}

/// Looks a problem up by its catalogue name.
pub fn problem_by_name(name: &str) -> Result<Box<dyn AnalyticProblem>> {
    analytic_problems()
        .into_iter()
        .find(|p| p.name() == name)
        .map_or_else(|| domain(format!("unknown problem '{name}'")), Ok)
}

/// Distance from `f` to the planar curve `c(s)`, `s in [lo, hi]`: a dense
/// scan followed by golden-section refinement around the best sample.
fn curve_distance(f: &[f64], c: impl Fn(f64) -> [f64; 2], lo: f64, hi: f64) -> f64 {
    let d = |s: f64| {
        let p = c(s);
        ((p[0] - f[0]).powi(2) + (p[1] - f[1]).powi(2)).sqrt()
    };
    const N: usize = 2000;
    let h = (hi - lo) / N as f64;
    let best = (0..=N).map(|i| lo + i as f64 * h).min_by(|a, b| d(*a).total_cmp(&d(*b))).unwrap_or(lo);
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if d(x1) <= d(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    d(best).min(d((a + b) / 2.0))
}

/// Mean distance from `points` to the problem's known front, or `None` when
/// the front is unknown or `points` is empty.
pub fn generational_distance<P: AsRef<[f64]>>(problem: &dyn AnalyticProblem, points: &[P]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for p in points {
        total += problem.front_distance(p.as_ref())?;
    }
    Some(total / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_values() {
        assert_eq!(Convex2::default().evaluate(&[0.0, 0.0]), vec![1.0, 1.0]);
        assert_eq!(Concave2.evaluate(&[0.0]), vec![0.0, 1.0]);
        assert_eq!(Concave2.evaluate(&[1.0]), vec![1.0, 0.0]);
        assert_eq!(Concave2.on_front(&[0.5, 0.75], 0.0), Some(true));
        assert_eq!(Concave2.on_front(&[0.5, 0.8], 1e-9), Some(false));
        assert!(!Concave2.convex_front() && Convex2::default().convex_front());
        let names: Vec<_> = analytic_problems().iter().map(|p| p.name().to_string()).collect();
        assert_eq!(names, ["convex2", "concave2", "sparse3"]);
        assert!(problem_by_name("nope").is_err());
    }

    #[test]
    fn front_distances() {
        let p = Convex2::default();
        assert_eq!(p.front_distance(&[1.0, 1.0]), Some(0.0));
        assert_eq!(generational_distance(&p, &[[0.0, 4.0], [4.0, 0.0], [1.0, 1.0]]), Some(0.0));
        // (1,1) + (0.1,0.1): nearest front point is (1,1) by symmetry
        let d = p.front_distance(&[1.1, 1.1]).unwrap();
        assert!((d - 0.1 * 2f64.sqrt()).abs() < 1e-9, "{d}");
        let d = Concave2.front_distance(&[0.0, 1.5]).unwrap();
        assert!((d - 0.5).abs() < 1e-9, "{d}");
        assert_eq!(generational_distance(&Sparse3::default(), &[[0.0, 1.0, 1.0]]), None);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let probs: Vec<Box<dyn AnalyticProblem>> = vec![
            Box::new(Convex2 { dim: 3 }),
            Box::new(Concave2),
            Box::new(Sparse3::default()),
        ];
        for p in probs {
            let x = p.start(7);
            for j in 0..p.n_objectives() {
                let Some(g) = p.gradient(j, &x) else { continue };
                for (i, gi) in g.iter().enumerate() {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (p.evaluate(&xp)[j] - p.evaluate(&xm)[j]) / (2.0 * h);
                    assert!((fd - gi).abs() <= 1e-6 * (1.0 + gi.abs()), "{} f{j} x{i}: {fd} vs {gi}", p.name());
                }
            }
        }
    }

    #[test]
    fn sparse3_prox_is_owl_prox() {
        let p = Sparse3::default();
        let mut x = vec![3.0, -2.0, 0.1, 0.0, 1.0, -0.05, 0.0, 0.0, 0.0, 0.0];
        p.prox(&mut x, &[1.0, 0.0, 0.0], 0.01);
        // theta = (40, 20, ...) * 0.01: largest magnitude shrinks by 0.4, the rest by 0.2
        assert!((x[0] - 2.6).abs() < 1e-12 && (x[1] + 1.8).abs() < 1e-12);
        assert_eq!((x[2], x[5]), (0.0, 0.0));
        assert!((x[4] - 0.8).abs() < 1e-12);
    }
}
