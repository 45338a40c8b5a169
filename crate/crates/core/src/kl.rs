//! kNN estimators of KL divergence and the analytic gradient used by the
//! inner descent loop.
//!
//! Two estimators are provided for `D_KL(P_X || P_D)`:
//!
//! * [`kl_single_k`], the classic single-neighbor-order estimate
//!   `(1/n) sum_i [d log nu_k(i) - d log rho_k(i)] + log(m/(n-1))`, where
//!   `nu_k(i)` is the distance from target point `x_i` to its k-th nearest
//!   reference point and `rho_k(i)` the distance to its k-th nearest other
//!   target point.
//! * [`kl_averaged`], the same estimate averaged over every reference rank
//!   `k = 1..m` while holding the target-side order at `l`. The average
//!   makes the value depend on the distance from each `x_i` to *every*
//!   reference point, which is what gives a candidate reference point a
//!   nonzero gradient even when it is far from all targets.
//!
//! Averaging over all ranks collapses, per target point, to the plain sum of
//! log distances to the reference set ("rank-sum identity"):
//! `sum_{k=1..m} log nu_k(i) = sum_{y in D} log ||x_i - y||`, because the
//! sorted distances are a permutation of all distances. The implementation
//! uses that form directly; it is exact, not an approximation, and it makes
//! the gradient with respect to a reference point a closed-form expression
//! ([`kl_gradient`]) with no differentiation through sorting.

use rayon::prelude::*;

use crate::dataset::{euclidean, VectorDataset};
use crate::error::{GioError, Result};

/// Floor applied to every distance before it enters a log or a gradient
/// denominator. Duplicate points would otherwise produce -inf/NaN.
pub const DIST_EPS: f64 = 1e-12;

/// Sorted distance structure behind the estimators, exposed for direct
/// inspection and for evaluating the estimator literally rank by rank.
pub struct KnnDistances {
    /// Row `i`: distances from target point `x_i` to every reference point,
    /// sorted ascending. With `discard_nearest` the single nearest reference
    /// is dropped, so rows have length `m - 1`.
    pub nu: Vec<Vec<f64>>,
    /// `rho[i]`: distance from `x_i` to its l-th nearest other target point.
    pub rho: Vec<f64>,
    /// Target-side neighbor order used for `rho`.
    pub l: usize,
}

impl KnnDistances {
    pub fn compute(
        x: &VectorDataset,
        d_set: &VectorDataset,
        l: usize,
        discard_nearest: bool,
    ) -> Result<Self> {
        check_pair(x, d_set)?;
        let m_eff = effective_refs(d_set.len(), discard_nearest)?;
        if x.len() < l + 1 {
            return Err(GioError::TooFewPoints {
                what: "target set (need l+1 for rho)",
                needed: l + 1,
                got: x.len(),
            });
        }
        let nu: Vec<Vec<f64>> = (0..x.len())
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<f64> = d_set.points().map(|y| euclidean(x.point(i), y)).collect();
                row.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if discard_nearest {
                    row.remove(0);
                }
                debug_assert_eq!(row.len(), m_eff);
                row
            })
            .collect();
        let rho = rho_distances(x, l);
        Ok(Self { nu, rho, l })
    }
}

fn check_pair(x: &VectorDataset, d_set: &VectorDataset) -> Result<()> {
    if x.dim() != d_set.dim() {
        return Err(GioError::DimMismatch {
            expected: x.dim(),
            found: d_set.dim(),
        });
    }
    if x.len() < 2 {
        return Err(GioError::TooFewPoints {
            what: "target set",
            needed: 2,
            got: x.len(),
        });
    }
    Ok(())
}

fn effective_refs(m: usize, discard_nearest: bool) -> Result<usize> {
    let needed = if discard_nearest { 2 } else { 1 };
    if m < needed {
        return Err(GioError::TooFewPoints {
            what: "reference set",
            needed,
            got: m,
        });
    }
    Ok(m - usize::from(discard_nearest))
}

/// `rho[i]` = distance from `x_i` to its l-th nearest other target point.
fn rho_distances(x: &VectorDataset, l: usize) -> Vec<f64> {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<f64> = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| euclidean(x.point(i), x.point(j)))
                .collect();
            let (_, kth, _) = dists.select_nth_unstable_by(l - 1, |a, b| a.partial_cmp(b).unwrap());
            *kth
        })
        .collect()
}

fn ln_floored(v: f64) -> f64 {
    v.max(DIST_EPS).ln()
}

/// Single-order kNN estimate of `D_KL(P_X || P_D)` at neighbor order `k`.
///
/// With `discard_nearest`, reference ranks skip each target point's single
/// nearest reference (for the X = G case where the reference set contains
/// the targets themselves) and the reference count in the additive constant
/// shrinks accordingly.
pub fn kl_single_k(
    x: &VectorDataset,
    d_set: &VectorDataset,
    k: usize,
    discard_nearest: bool,
) -> Result<f64> {
    check_pair(x, d_set)?;
    if k == 0 {
        return Err(GioError::InvalidConfig("k must be at least 1".into()));
    }
    let m_eff = effective_refs(d_set.len(), discard_nearest)?;
    if m_eff < k {
        return Err(GioError::TooFewPoints {
            what: "reference set (need k usable ranks)",
            needed: k + usize::from(discard_nearest),
            got: d_set.len(),
        });
    }
    if x.len() < k + 1 {
        return Err(GioError::TooFewPoints {
            what: "target set (need k+1 for rho)",
            needed: k + 1,
            got: x.len(),
        });
    }
    let n = x.len();
    let d = x.dim() as f64;
    let rho = rho_distances(x, k);
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<f64> =
                d_set.points().map(|y| euclidean(x.point(i), y)).collect();
            let rank = k - 1 + usize::from(discard_nearest);
            let (_, nu_k, _) =
                dists.select_nth_unstable_by(rank, |a, b| a.partial_cmp(b).unwrap());
            d * ln_floored(*nu_k) - d * ln_floored(rho[i])
        })
        .collect();
    let sum: f64 = per_point.iter().sum();
    Ok(sum / n as f64 + (m_eff as f64 / (n as f64 - 1.0)).ln())
}

/// Rank-averaged kNN estimate of `D_KL(P_X || P_D)`:
///
/// `(1/m) sum_{k=1..m} { (1/n) sum_i [d log nu_k(i) - d log rho_l(i)] + log(l m / (k (n-1))) }`
///
/// computed through the rank-sum identity, so the reference side reduces to
/// the mean log distance from each target to every reference point.
pub fn kl_averaged(
    x: &VectorDataset,
    d_set: &VectorDataset,
    l: usize,
    discard_nearest: bool,
) -> Result<f64> {
    check_pair(x, d_set)?;
    if l == 0 {
        return Err(GioError::InvalidConfig("l must be at least 1".into()));
    }
    if x.len() < l + 1 {
        return Err(GioError::TooFewPoints {
            what: "target set (need l+1 for rho)",
            needed: l + 1,
            got: x.len(),
        });
    }
    let m_eff = effective_refs(d_set.len(), discard_nearest)?;
    let n = x.len();
    let d = x.dim() as f64;

    // Per target point: sum of log distances to the reference set, dropping
    // one occurrence of the minimum when discarding the nearest.
    let log_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sum = 0.0;
            let mut min_log = f64::INFINITY;
            for y in d_set.points() {
                let lg = ln_floored(euclidean(x.point(i), y));
                sum += lg;
                if lg < min_log {
                    min_log = lg;
                }
            }
            if discard_nearest {
                sum - min_log
            } else {
                sum
            }
        })
        .collect();
    let nu_part = d * log_sums.iter().sum::<f64>() / (m_eff as f64 * n as f64);

    let rho = rho_distances(x, l);
    let rho_part = d * rho.iter().map(|&r| ln_floored(r)).sum::<f64>() / n as f64;

    // (1/m) sum_{k=1..m} log(l m / (k (n-1))) = log(l m / (n-1)) - mean log k
    let m_f = m_eff as f64;
    let mean_log_k = (1..=m_eff).map(|k| (k as f64).ln()).sum::<f64>() / m_f;
    let constant = (l as f64 * m_f / (n as f64 - 1.0)).ln() - mean_log_k;

    Ok(nu_part - rho_part + constant)
}

/// Analytic gradient of `kl_averaged(x, d_set + {v}, l)` with respect to the
/// candidate point `v`:
///
/// `(d / (m' n)) sum_i (v - x_i) / ||x_i - v||^2`, with `m' = |d_set| + 1`.
///
/// Only the reference-side rank average depends on `v`, so `l` does not
/// enter the value; the parameter is kept so the signature mirrors the
/// estimator being differentiated. Coincidence of `v` with a target point
/// floors the denominator at [`DIST_EPS`] rather than erroring.
pub fn kl_gradient(x: &VectorDataset, d_set: &VectorDataset, v: &[f64], l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(GioError::InvalidConfig("l must be at least 1".into()));
    }
    if x.dim() != v.len() {
        return Err(GioError::DimMismatch {
            expected: x.dim(),
            found: v.len(),
        });
    }
    if !d_set.is_empty() && d_set.dim() != x.dim() {
        return Err(GioError::DimMismatch {
            expected: x.dim(),
            found: d_set.dim(),
        });
    }
    if x.is_empty() {
        return Err(GioError::TooFewPoints {
            what: "target set",
            needed: 1,
            got: 0,
        });
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(GioError::NonFiniteComponent { row: 0 });
    }
    let n = x.len() as f64;
    let d = x.dim() as f64;
    let m_prime = d_set.len() as f64 + 1.0;
    let mut grad = vec![0.0; v.len()];
    for p in x.points() {
        let dist = euclidean(p, v).max(DIST_EPS);
        let inv_sq = 1.0 / (dist * dist);
        for (g, (vc, pc)) in grad.iter_mut().zip(v.iter().zip(p)) {
            *g += (vc - pc) * inv_sq;
        }
    }
    let scale = d / (m_prime * n);
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// Gradient of the *single-order* estimator `kl_single_k(x, d_set + {v}, k)`
/// with respect to `v`. The term for target point `x_i` is nonzero only when
/// `v` currently sits at rank `k` among its references, which is exactly why
/// the single-order estimator stalls for a far-away candidate and the
/// rank-averaged one does not.
pub fn kl_single_k_gradient(
    x: &VectorDataset,
    d_set: &VectorDataset,
    v: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(GioError::InvalidConfig("k must be at least 1".into()));
    }
    if x.dim() != v.len() {
        return Err(GioError::DimMismatch {
            expected: x.dim(),
            found: v.len(),
        });
    }
    let n = x.len() as f64;
    let d = x.dim() as f64;
    let mut grad = vec![0.0; v.len()];
    for p in x.points() {
        let dist_v = euclidean(p, v);
        // Rank of v among d_set + {v}: references strictly closer than v,
        // with ties going to the existing reference points.
        let closer = d_set
            .points()
            .filter(|y| euclidean(p, y) <= dist_v)
            .count();
        if closer + 1 == k {
            let dist = dist_v.max(DIST_EPS);
            let inv_sq = 1.0 / (dist * dist);
            for (g, (vc, pc)) in grad.iter_mut().zip(v.iter().zip(p)) {
                *g += (vc - pc) * inv_sq * d / n;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn ds(rows: Vec<Vec<f64>>) -> VectorDataset {
        VectorDataset::from_rows(rows).unwrap()
    }

    /// Literal evaluation of the rank-averaged estimator from sorted rows,
    /// independent of the rank-sum shortcut in `kl_averaged`.
    fn kl_averaged_literal(
        x: &VectorDataset,
        d_set: &VectorDataset,
        l: usize,
        discard: bool,
    ) -> f64 {
        let knn = KnnDistances::compute(x, d_set, l, discard).unwrap();
        let n = x.len() as f64;
        let d = x.dim() as f64;
        let m = knn.nu[0].len();
        let mut total = 0.0;
        for k in 1..=m {
            let mut inner = 0.0;
            for i in 0..x.len() {
                inner += d * knn.nu[i][k - 1].max(DIST_EPS).ln()
                    - d * knn.rho[i].max(DIST_EPS).ln();
            }
            total += inner / n + (l as f64 * m as f64 / (k as f64 * (n - 1.0))).ln();
        }
        total / m as f64
    }

    #[test]
    fn single_k_hand_example() {
        // X = {0, 1}, D = {0.5}, k = 1 -> log 0.5
        let x = ds(vec![vec![0.0], vec![1.0]]);
        let d = ds(vec![vec![0.5]]);
        let v = kl_single_k(&x, &d, 1, false).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn averaged_collapses_to_single_k_when_m_is_1() {
        let x = ds(vec![vec![0.0], vec![1.0]]);
        let d = ds(vec![vec![0.5]]);
        let a = kl_averaged(&x, &d, 1, false).unwrap();
        let s = kl_single_k(&x, &d, 1, false).unwrap();
        assert!((a - s).abs() < 1e-12);
        assert!((a - (-std::f64::consts::LN_2)).abs() < 1e-9);
    }

    #[test]
    fn averaged_hand_example() {
        // X = {0, 2}, D = {0.5, 1.5}, l = 1 -> (1/2)log0.75 - (1/2)log2
        let x = ds(vec![vec![0.0], vec![2.0]]);
        let d = ds(vec![vec![0.5], vec![1.5]]);
        let v = kl_averaged(&x, &d, 1, false).unwrap();
        let expected = 0.5 * 0.75f64.ln() - 0.5 * 2.0f64.ln();
        assert!((v - expected).abs() < 1e-9, "got {v}, want {expected}");
        assert!((v - (-0.4904146265058631)).abs() < 1e-9);
    }

    #[test]
    fn rank_sum_shortcut_matches_literal_evaluation() {
        let mut rng = SeededRng::new(5);
        for _ in 0..20 {
            let n = 4 + rng.index(8);
            let m = 2 + rng.index(8);
            let dim = 1 + rng.index(4);
            let x = ds((0..n)
                .map(|_| (0..dim).map(|_| rng.normal(0.0, 1.0)).collect())
                .collect());
            let d = ds((0..m)
                .map(|_| (0..dim).map(|_| rng.normal(0.5, 1.2)).collect())
                .collect());
            for discard in [false, true] {
                let fast = kl_averaged(&x, &d, 1, discard).unwrap();
                let slow = kl_averaged_literal(&x, &d, 1, discard);
                assert!(
                    (fast - slow).abs() < 1e-10,
                    "fast {fast} vs literal {slow} (discard {discard})"
                );
            }
        }
    }

    #[test]
    fn self_comparison_with_discard_is_finite_and_nonzero() {
        // Identical two-point sets: without the discard every nearest
        // reference distance is 0 and only the floor keeps the value
        // finite; with it the estimate needs no floor at all.
        let two = ds(vec![vec![0.0], vec![1.0]]);
        let v = kl_averaged(&two, &two, 1, true).unwrap();
        assert!(v.is_finite());

        let x = ds(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5]]);
        let v = kl_averaged(&x, &x, 1, true).unwrap();
        assert!(v.is_finite());
        assert!(v.abs() > 1e-9, "self-KL of the averaged estimator is not 0");
        let s = kl_single_k(&x, &x, 1, true).unwrap();
        assert!(s.is_finite());
    }

    #[test]
    fn k_larger_than_reference_set_errors() {
        let x = ds(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let d = ds(vec![vec![0.5]]);
        assert!(matches!(
            kl_single_k(&x, &d, 2, false),
            Err(GioError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let x = ds(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let d = ds(vec![vec![0.5]]);
        assert!(matches!(
            kl_averaged(&x, &d, 1, false),
            Err(GioError::DimMismatch { .. })
        ));
    }

    #[test]
    fn gradient_hand_example() {
        // X = {0, 1}, D = {0.5}, v = 2 -> (1/4)(2/4 + 1/1) = 0.375
        let x = ds(vec![vec![0.0], vec![1.0]]);
        let d = ds(vec![vec![0.5]]);
        let g = kl_gradient(&x, &d, &[2.0], 1).unwrap();
        assert!((g[0] - 0.375).abs() < 1e-12, "got {g:?}");
    }

    #[test]
    fn gradient_vanishes_by_symmetry() {
        let x = ds(vec![vec![-1.0], vec![1.0]]);
        let d = ds(vec![vec![5.0]]);
        let g = kl_gradient(&x, &d, &[0.0], 1).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = SeededRng::new(9);
        for dim in [2usize, 16] {
            for _ in 0..10 {
                let x = ds((0..12)
                    .map(|_| (0..dim).map(|_| rng.normal(0.0, 1.0)).collect())
                    .collect());
                let d = ds((0..5)
                    .map(|_| (0..dim).map(|_| rng.normal(0.0, 1.0)).collect())
                    .collect());
                let v: Vec<f64> = (0..dim).map(|_| rng.normal(2.5, 0.5)).collect();
                let g = kl_gradient(&x, &d, &v, 2).unwrap();
                let h = 1e-6;
                let mut fd = vec![0.0; dim];
                for j in 0..dim {
                    let eval = |vj: f64| {
                        let mut w = v.clone();
                        w[j] = vj;
                        let mut rows: Vec<Vec<f64>> =
                            d.points().map(|p| p.to_vec()).collect();
                        rows.push(w);
                        kl_averaged(&x, &ds(rows), 2, false).unwrap()
                    };
                    fd[j] = (eval(v[j] + h) - eval(v[j] - h)) / (2.0 * h);
                }
                let num = euclidean(&g, &fd);
                let den = fd.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
                assert!(num / den < 1e-4, "rel err {} at dim {dim}", num / den);
            }
        }
    }

    #[test]
    fn zero_gradient_dichotomy() {
        // v far from every target: its rank among references is always last,
        // so the single-order gradient is exactly zero while the averaged
        // gradient still points away from the targets.
        let mut rng = SeededRng::new(3);
        let x = ds((0..10)
            .map(|_| vec![rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)])
            .collect());
        let d = ds((0..5)
            .map(|_| vec![rng.normal(0.0, 0.4), rng.normal(0.0, 0.4)])
            .collect());
        let v = [100.0, 100.0];
        for k in 1..=5 {
            let g = kl_single_k_gradient(&x, &d, &v, k).unwrap();
            assert!(g.iter().all(|&c| c == 0.0), "k={k} gave {g:?}");
        }
        let g = kl_gradient(&x, &d, &v, 1).unwrap();
        let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!(norm > 1e-8, "averaged gradient norm {norm}");
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = SeededRng::new(21);
        for _ in 0..10 {
            let dim = 2 + rng.index(3);
            let shift: Vec<f64> = (0..dim).map(|_| rng.uniform(-50.0, 50.0)).collect();
            let xr: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..dim).map(|_| rng.normal(0.0, 1.0)).collect())
                .collect();
            let dr: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..dim).map(|_| rng.normal(0.0, 1.0)).collect())
                .collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 2.0)).collect();
            let translate = |rows: &[Vec<f64>]| {
                ds(rows
                    .iter()
                    .map(|r| r.iter().zip(&shift).map(|(a, s)| a + s).collect())
                    .collect())
            };
            let (x, d) = (ds(xr.clone()), ds(dr.clone()));
            let (xt, dt) = (translate(&xr), translate(&dr));
            let vt: Vec<f64> = v.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let kl = kl_averaged(&x, &d, 2, false).unwrap();
            let klt = kl_averaged(&xt, &dt, 2, false).unwrap();
            assert!((kl - klt).abs() < 1e-9, "{kl} vs {klt}");
            let g = kl_gradient(&x, &d, &v, 2).unwrap();
            let gt = kl_gradient(&xt, &dt, &vt, 2).unwrap();
            assert!(euclidean(&g, &gt) < 1e-9);
        }
    }

    #[test]
    fn adding_the_mean_beats_adding_a_far_point() {
        let mut rng = SeededRng::new(33);
        for trial in 0..10 {
            let x = ds((0..40)
                .map(|_| vec![rng.normal(3.0, 0.7), rng.normal(4.0, 0.7)])
                .collect());
            let base: Vec<Vec<f64>> = (0..5)
                .map(|_| vec![rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0)])
                .collect();
            let with = |extra: Vec<f64>| {
                let mut rows = base.clone();
                rows.push(extra);
                kl_averaged(&x, &ds(rows), 2, false).unwrap()
            };
            let near = with(x.mean());
            let far = with(vec![60.0, -40.0]);
            assert!(near <= far, "trial {trial}: {near} > {far}");
        }
    }
}
