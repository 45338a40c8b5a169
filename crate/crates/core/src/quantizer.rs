//! K-means quantization and the inverse explosion step.
//!
//! Selection runs on cluster centroids instead of raw points; once centroids
//! are chosen, [`explode`] recovers every original row belonging to them.

use rayon::prelude::*;

use crate::dataset::{euclidean, VectorDataset};
use crate::error::{GioError, Result};
use crate::rng::SeededRng;

pub const KMEANS_MAX_ITERS: usize = 100;
/// Convergence tolerance on the maximum centroid shift, relative to the RMS
/// norm of the data.
pub const KMEANS_TOL: f64 = 1e-4;

/// K centroids plus the per-source-point assignment that produced them.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub centroids: VectorDataset,
    /// Cluster index in `[0, k)` for every source point, in source order.
    pub assignment: Vec<usize>,
    pub source_count: usize,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    /// Lloyd iterations actually run.
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn membership_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k()];
        for &a in &self.assignment {
            counts[a] += 1;
        }
        counts
    }
}

/// Lloyd's algorithm from k-means++ seeding, deterministic under the seed.
///
/// Runs until the maximum centroid shift falls below `tol` (relative to the
/// data's RMS norm) or `max_iters` is reached. An empty cluster is repaired
/// by re-seeding it with the farthest point of the largest cluster, so the
/// returned model never contains one.
pub fn kmeans(
    ds: &VectorDataset,
    k: usize,
    rng: &mut SeededRng,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(GioError::InvalidConfig("k must be at least 1".into()));
    }
    if max_iters == 0 {
        return Err(GioError::InvalidConfig("max_iters must be at least 1".into()));
    }
    let n = ds.len();
    if n < k {
        return Err(GioError::TooFewPoints {
            what: "kmeans input",
            needed: k,
            got: n,
        });
    }
    let dim = ds.dim();
    let mut centroids = plus_plus_seed(ds, k, rng);
    let scale = {
        let sq: f64 = ds.as_flat().iter().map(|c| c * c).sum();
        (sq / n as f64).sqrt().max(1e-12)
    };

    let mut assignment = vec![0usize; n];
    let mut inertia = 0.0;
    let mut iterations = 0;

    for it in 1..=max_iters {
        iterations = it;
        // Assignment step, parallel over points; ties go to the lowest index.
        assignment = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(ds.point(i), &centroids, dim))
            .collect();

        // Update step: means of assigned points.
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            let p = ds.point(i);
            for (s, c) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += c;
            }
        }

        // Repair empty clusters before computing the new centroids.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let (largest, _) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            let mean_l: Vec<f64> = sums[largest * dim..(largest + 1) * dim]
                .iter()
                .map(|s| s / counts[largest] as f64)
                .collect();
            let farthest = assignment
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == largest)
                .map(|(i, _)| (i, euclidean(ds.point(i), &mean_l)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap();
            assignment[farthest] = j;
            counts[largest] -= 1;
            counts[j] += 1;
            let p = ds.point(farthest);
            for d in 0..dim {
                sums[largest * dim + d] -= p[d];
                sums[j * dim + d] += p[d];
            }
        }

        let mut shift: f64 = 0.0;
        let mut next = vec![0.0f64; k * dim];
        for j in 0..k {
            for d in 0..dim {
                next[j * dim + d] = sums[j * dim + d] / counts[j] as f64;
            }
            shift = shift.max(euclidean(
                &next[j * dim..(j + 1) * dim],
                &centroids[j * dim..(j + 1) * dim],
            ));
        }
        centroids = next;

        inertia = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = &centroids[assignment[i] * dim..(assignment[i] + 1) * dim];
                let d = euclidean(ds.point(i), c);
                d * d
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();

        if shift <= tol * scale {
            break;
        }
    }

    Ok(ClusterModel {
        centroids: VectorDataset::from_flat(centroids, dim)?,
        assignment,
        source_count: n,
        inertia,
        iterations,
    })
}

fn nearest_centroid(p: &[f64], centroids: &[f64], dim: usize) -> usize {
    let k = centroids.len() / dim;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..k {
        let d = euclidean(p, &centroids[j * dim..(j + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, then each next proportional to
/// squared distance from the nearest chosen one.
fn plus_plus_seed(ds: &VectorDataset, k: usize, rng: &mut SeededRng) -> Vec<f64> {
    let n = ds.len();
    let dim = ds.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.index(n);
    centroids.extend_from_slice(ds.point(first));

    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| {
            let d = euclidean(ds.point(i), ds.point(first));
            d * d
        })
        .collect();

    for _ in 1..k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w;
                if acc >= r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every remaining point coincides with a chosen centroid.
            rng.index(n)
        };
        let c_start = centroids.len();
        centroids.extend_from_slice(ds.point(next));
        let c = &centroids[c_start..];
        for i in 0..n {
            let d = euclidean(ds.point(i), c);
            min_d2[i] = min_d2[i].min(d * d);
        }
    }
    centroids
}

/// Recover the source rows whose cluster assignment falls in the selected
/// index set. Original order, ids and payloads are preserved. Duplicate
/// indices in `selected` are treated as a set here; weighting by selection
/// multiplicity is the caller's concern.
pub fn explode(
    selected: &[usize],
    model: &ClusterModel,
    source: &VectorDataset,
) -> Result<VectorDataset> {
    if source.len() != model.source_count {
        return Err(GioError::InvalidConfig(format!(
            "source has {} rows but the model quantized {}",
            source.len(),
            model.source_count
        )));
    }
    let k = model.k();
    let mut chosen = vec![false; k];
    for &idx in selected {
        if idx >= k {
            return Err(GioError::ClusterIndexOutOfRange { index: idx, k });
        }
        chosen[idx] = true;
    }
    let rows: Vec<usize> = model
        .assignment
        .iter()
        .enumerate()
        .filter(|(_, &a)| chosen[a])
        .map(|(i, _)| i)
        .collect();
    source.select(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_cloud(n: usize, center: (f64, f64), std: f64, seed: u64) -> VectorDataset {
        let mut rng = SeededRng::new(seed);
        VectorDataset::from_rows(
            (0..n)
                .map(|_| vec![rng.normal(center.0, std), rng.normal(center.1, std)])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let ds = gaussian_cloud(12, (3.0, 4.0), 1.0, 1);
        let mut rng = SeededRng::new(2);
        let model = kmeans(&ds, 12, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        assert!(model.inertia < 1e-18, "inertia {}", model.inertia);
        assert!(model.membership_counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn k_one_is_the_mean() {
        let ds = gaussian_cloud(50, (3.0, 4.0), 1.0, 3);
        let mut rng = SeededRng::new(4);
        let model = kmeans(&ds, 1, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let mean = ds.mean();
        assert!(euclidean(model.centroids.point(0), &mean) < 1e-9);
    }

    #[test]
    fn too_few_points_errors() {
        let ds = gaussian_cloud(3, (0.0, 0.0), 1.0, 1);
        let mut rng = SeededRng::new(1);
        assert!(matches!(
            kmeans(&ds, 4, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL),
            Err(GioError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn centroids_are_cluster_means_and_no_cluster_is_empty() {
        let ds = gaussian_cloud(200, (3.0, 4.0), 0.7, 7);
        let mut rng = SeededRng::new(8);
        let model = kmeans(&ds, 20, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let counts = model.membership_counts();
        assert!(counts.iter().all(|&c| c > 0));
        let dim = ds.dim();
        let mut sums = vec![0.0; model.k() * dim];
        for (i, &a) in model.assignment.iter().enumerate() {
            for (s, c) in sums[a * dim..(a + 1) * dim].iter_mut().zip(ds.point(i)) {
                *s += c;
            }
        }
        for j in 0..model.k() {
            for d in 0..dim {
                let mean = sums[j * dim + d] / counts[j] as f64;
                assert!(
                    (mean - model.centroids.point(j)[d]).abs() < 1e-6,
                    "centroid {j} drifted from its cluster mean"
                );
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = gaussian_cloud(120, (1.0, -2.0), 1.5, 9);
        let run = || {
            let mut rng = SeededRng::new(17);
            kmeans(&ds, 10, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.centroids.as_flat(), b.centroids.as_flat());
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn inertia_non_increasing_over_iterations() {
        let ds = gaussian_cloud(300, (0.0, 0.0), 2.0, 11);
        let mut prev = f64::INFINITY;
        for iters in 1..=8 {
            let mut rng = SeededRng::new(13);
            let model = kmeans(&ds, 15, &mut rng, iters, 0.0).unwrap();
            assert!(
                model.inertia <= prev + 1e-9,
                "inertia rose at iteration {iters}: {} > {prev}",
                model.inertia
            );
            prev = model.inertia;
        }
    }

    #[test]
    fn more_clusters_means_less_inertia() {
        let ds = gaussian_cloud(300, (0.0, 0.0), 2.0, 19);
        let best = |k: usize| {
            (0..5)
                .map(|s| {
                    let mut rng = SeededRng::new(s);
                    kmeans(&ds, k, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL)
                        .unwrap()
                        .inertia
                })
                .fold(f64::INFINITY, f64::min)
        };
        assert!(best(11) <= best(10));
    }

    #[test]
    fn explode_identity_and_empty() {
        let ds = gaussian_cloud(60, (3.0, 4.0), 0.5, 21);
        let mut rng = SeededRng::new(22);
        let model = kmeans(&ds, 8, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let all: Vec<usize> = (0..8).collect();
        let full = explode(&all, &model, &ds).unwrap();
        assert_eq!(full, ds);
        let none = explode(&[], &model, &ds).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn explode_counts_match_memberships() {
        // 400 points quantized to 50 centroids, 20 selected: the returned
        // row count equals the sum of those clusters' membership counts.
        let ds = gaussian_cloud(400, (3.0, 4.0), 0.707, 23);
        let mut rng = SeededRng::new(24);
        let model = kmeans(&ds, 50, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let picked: Vec<usize> = (0..50).step_by(5).chain([1, 2, 3, 4, 6, 7, 8, 9, 11, 12]).collect();
        assert_eq!(picked.len(), 20);
        let counts = model.membership_counts();
        let expected: usize = picked.iter().map(|&j| counts[j]).sum();
        let out = explode(&picked, &model, &ds).unwrap();
        assert_eq!(out.len(), expected);
    }

    #[test]
    fn explode_rejects_out_of_range_index() {
        let ds = gaussian_cloud(30, (0.0, 0.0), 1.0, 25);
        let mut rng = SeededRng::new(26);
        let model = kmeans(&ds, 5, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        assert!(matches!(
            explode(&[5], &model, &ds),
            Err(GioError::ClusterIndexOutOfRange { index: 5, k: 5 })
        ));
    }

    #[test]
    fn explode_over_a_partition_covers_the_source() {
        let ds = gaussian_cloud(150, (1.0, 1.0), 1.0, 27);
        let mut rng = SeededRng::new(28);
        let model = kmeans(&ds, 12, &mut rng, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let part_a: Vec<usize> = (0..6).collect();
        let part_b: Vec<usize> = (6..12).collect();
        let a = explode(&part_a, &model, &ds).unwrap();
        let b = explode(&part_b, &model, &ds).unwrap();
        assert_eq!(a.len() + b.len(), model.source_count);
    }
}
