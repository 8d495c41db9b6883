//! Dominance relations and filters over finite point sets.
//!
//! Both filters scan the points in lexicographic order (ties by input index).
//! A point can only be dominated by points that are lexicographically no
//! larger, so a single pass against the kept set suffices, and the kept set
//! does not depend on the order in which the points were supplied.

use std::cmp::Ordering;

use crate::error::{domain, Result};

/// `p` dominates `q`: no worse everywhere and strictly better somewhere.
pub fn dominates(p: &[f64], q: &[f64]) -> Result<bool> {
    same_len(p, q)?;
    Ok(dominates_unchecked(p, q))
}

pub(crate) fn dominates_unchecked(p: &[f64], q: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in p.iter().zip(q) {
        if a > b {
            return false;
        }
        if a < b {
            strict = true;
        }
    }
    strict
}

/// Additive epsilon-dominance: `p_i - eps <= q_i` for all `i` and
/// `p_j - eps < q_j` for some `j`. With `eps = 0` this is [`dominates`].
pub fn eps_dominates(p: &[f64], q: &[f64], eps: f64) -> Result<bool> {
    same_len(p, q)?;
    if !(eps >= 0.0) {
        return domain(format!("epsilon must be >= 0, got {eps}"));
    }
    Ok(eps_dominates_unchecked(p, q, eps))
}

pub(crate) fn eps_dominates_unchecked(p: &[f64], q: &[f64], eps: f64) -> bool {
    let mut strict = false;
    for (a, b) in p.iter().zip(q) {
        let a = a - eps;
        if a > *b {
            return false;
        }
        if a < *b {
            strict = true;
        }
    }
    strict
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return domain(format!(
            "cannot compare vectors of length {} and {}",
            p.len(),
            q.len()
        ));
    }
    Ok(())
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<()> {
    let Some(first) = points.first() else {
        return domain("point set is empty");
    };
    let n = first.as_ref().len();
    for (i, p) in points.iter().enumerate() {
        if p.as_ref().len() != n {
            return domain(format!("point {i} has length {}, expected {n}", p.as_ref().len()));
        }
        if p.as_ref().iter().any(|v| v.is_nan()) {
            return domain(format!("point {i} contains NaN"));
        }
    }
    Ok(())
}

fn lex_order<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (points[i].as_ref(), points[j].as_ref());
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx
}

/// Indices (ascending) of the points not dominated by any other point.
/// Exact duplicates keep only their first occurrence.
pub fn pareto_filter<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<usize>> {
    check_points(points)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in lex_order(points) {
        let q = points[i].as_ref();
        let rejected = kept.iter().any(|&j| {
            let p = points[j].as_ref();
            p == q || dominates_unchecked(p, q)
        });
        if !rejected {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Consecutive epsilon-nondominance test: scanning in lexicographic order,
/// a point is kept unless an already kept point epsilon-dominates it.
/// With `eps = 0` the result equals [`pareto_filter`].
pub fn eps_nondominance_filter<P: AsRef<[f64]>>(points: &[P], eps: f64) -> Result<Vec<usize>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return domain(format!("epsilon must be finite and >= 0, got {eps}"));
    }
    check_points(points)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in lex_order(points) {
        let q = points[i].as_ref();
        let rejected = kept.iter().any(|&j| {
            let p = points[j].as_ref();
            // exact duplicates are not epsilon-dominated when eps == 0
            p == q || eps_dominates_unchecked(p, q, eps)
        });
        if !rejected {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Geoffrion proper-optimality check restricted to a finite set: point `x`
/// is certified when, for every rival and every objective the rival
/// improves, some objective the rival worsens has trade-off ratio `<= m`.
pub fn proper_pareto_certify<P: AsRef<[f64]>>(points: &[P], m: f64) -> Result<Vec<bool>> {
    if !(m > 0.0) {
        return domain(format!("trade-off bound M must be > 0, got {m}"));
    }
    check_points(points)?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let x = x.as_ref();
            points.iter().enumerate().all(|(r, rival)| {
                if r == i {
                    return true;
                }
                let rival = rival.as_ref();
                (0..x.len()).filter(|&o| rival[o] < x[o]).all(|o| {
                    let gain = x[o] - rival[o];
                    (0..x.len())
                        .filter(|&w| x[w] < rival[w])
                        .any(|w| gain / (rival[w] - x[w]) <= m)
                })
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_pareto(points: &[Vec<f64>]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                !(0..points.len()).any(|j| {
                    j != i
                        && (dominates_unchecked(&points[j], &points[i])
                            || (j < i && points[j] == points[i]))
                })
            })
            .collect()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn filter_examples() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_filter(&pts).unwrap(), vec![0, 1]);
        assert_eq!(pareto_filter(&[vec![3.0, 3.0]]).unwrap(), vec![0]);
        assert!(pareto_filter::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn duplicates_keep_first() {
        let pts = vec![vec![2.0, 1.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(pareto_filter(&pts).unwrap(), vec![0, 1]);
        assert_eq!(eps_nondominance_filter(&pts, 0.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn eps_filter_rejects_within_box() {
        let pts = vec![vec![1.0, 1.0], vec![1.05, 1.05]];
        assert_eq!(eps_nondominance_filter(&pts, 0.1).unwrap(), vec![0]);
        assert!(eps_nondominance_filter(&pts, -0.1).is_err());
    }

    #[test]
    fn proper_examples() {
        let pair = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(proper_pareto_certify(&pair, 1.0).unwrap(), vec![true, true]);
        assert_eq!(proper_pareto_certify(&pair, 0.5).unwrap(), vec![false, false]);
        assert_eq!(proper_pareto_certify(&[vec![1.0, 1.0]], 1e-9).unwrap(), vec![true]);
        assert!(proper_pareto_certify(&pair, 0.0).is_err());
    }

    #[test]
    fn proper_three_points_exhaustive() {
        // ratios against (0.5, 0.5): from (0,1) objective 0 gain 0.5 vs loss 0.5 -> 1
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let oracle: Vec<bool> = (0..3)
            .map(|i| {
                let mut ok = true;
                for r in 0..3 {
                    if r == i {
                        continue;
                    }
                    for o in 0..2 {
                        if pts[r][o] < pts[i][o] {
                            let mut found = false;
                            for w in 0..2 {
                                if pts[i][w] < pts[r][w]
                                    && (pts[i][o] - pts[r][o]) / (pts[r][w] - pts[i][w]) <= 0.5
                                {
                                    found = true;
                                }
                            }
                            ok &= found;
                        }
                    }
                }
                ok
            })
            .collect();
        assert_eq!(proper_pareto_certify(&pts, 0.5).unwrap(), oracle);
        assert_eq!(oracle, vec![false, false, false]);
        assert_eq!(proper_pareto_certify(&pts, 1.0).unwrap(), vec![true, true, true]);
    }

    fn point_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0u8..6, 3), 1..40)
            .prop_map(|v| v.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect())
    }

    proptest! {
        #[test]
        fn pareto_matches_brute_force(pts in point_set()) {
            prop_assert_eq!(pareto_filter(&pts).unwrap(), brute_pareto(&pts));
            prop_assert_eq!(eps_nondominance_filter(&pts, 0.0).unwrap(), brute_pareto(&pts));
        }

        #[test]
        fn filters_idempotent_and_permutation_invariant(pts in point_set(), eps in 0.0f64..1.5, seed in any::<u64>()) {
            for e in [0.0, eps] {
                let kept = eps_nondominance_filter(&pts, e).unwrap();
                let sub: Vec<Vec<f64>> = kept.iter().map(|&i| pts[i].clone()).collect();
                prop_assert_eq!(eps_nondominance_filter(&sub, e).unwrap().len(), sub.len());

                let mut perm: Vec<usize> = (0..pts.len()).collect();
                let mut s = seed;
                for i in (1..perm.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    perm.swap(i, (s >> 33) as usize % (i + 1));
                }
                let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
                let mut a: Vec<Vec<f64>> = kept.iter().map(|&i| pts[i].clone()).collect();
                let mut b: Vec<Vec<f64>> = eps_nondominance_filter(&shuffled, e)
                    .unwrap()
                    .iter()
                    .map(|&i| shuffled[i].clone())
                    .collect();
                a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                b.sort_by(|x, y| x.partial_cmp(y).unwrap());
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn dominance_irreflexive_and_transitive(pts in point_set()) {
            for p in &pts {
                prop_assert!(!dominates_unchecked(p, p));
            }
            for a in &pts {
                for b in &pts {
                    for c in &pts {
                        if dominates_unchecked(a, b) && dominates_unchecked(b, c) {
                            prop_assert!(dominates_unchecked(a, c));
                        }
                    }
                }
            }
        }
    }
}
