//! Reference selection methods: the exhaustive hill-climb (which doubles as
//! a correctness and timing oracle), similarity search, and random sampling.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::GioConfig;
use crate::dataset::{euclidean, VectorDataset};
use crate::error::{GioError, Result};
use crate::kl::kl_averaged;
use crate::report::SelectionReport;
use crate::rng::SeededRng;
use crate::selector::StopReason;

/// Exhaustive greedy selection: at each step, evaluate the divergence of
/// `d + {v}` for every remaining candidate `v` and add the exact argmin
/// (lowest index on ties). Cost per iteration is linear in the candidate
/// count, which is the whole reason the descent shortcut exists; keep the
/// inputs small.
pub fn naive_hill_climb(
    x: &VectorDataset,
    g: &VectorDataset,
    d0: &VectorDataset,
    iters: usize,
    l: usize,
) -> Result<SelectionReport> {
    if g.is_empty() {
        return Err(GioError::TooFewPoints {
            what: "candidate set",
            needed: 1,
            got: 0,
        });
    }
    let start = Instant::now();
    let dim = x.dim();
    let mut d_flat: Vec<f64> = d0.as_flat().to_vec();
    let mut remaining: BTreeSet<usize> = (0..g.len()).collect();
    let mut cfg = GioConfig::default();
    cfg.l = l;
    cfg.max_iter = iters;
    let mut report = SelectionReport::new(cfg);
    report.termination = StopReason::MaxIterations;

    for iteration in 1..=iters {
        report.iterations = iteration;
        if remaining.is_empty() {
            report.termination = StopReason::Exhausted;
            break;
        }
        let candidates: Vec<usize> = remaining.iter().copied().collect();
        let scored: Vec<(f64, usize)> = candidates
            .par_iter()
            .map(|&idx| {
                let mut flat = Vec::with_capacity(d_flat.len() + dim);
                flat.extend_from_slice(&d_flat);
                flat.extend_from_slice(g.point(idx));
                let d_set = VectorDataset::from_flat(flat, dim).expect("flat buffer");
                let kl = kl_averaged(x, &d_set, l, false).expect("scored candidate");
                (kl, idx)
            })
            .collect();
        // Sequential argmin in candidate order: lowest index wins ties.
        let (best_kl, best_idx) = scored
            .iter()
            .copied()
            .reduce(|a, b| if b.0 < a.0 { b } else { a })
            .unwrap();
        remaining.remove(&best_idx);
        d_flat.extend_from_slice(g.point(best_idx));
        report.selected.push(best_idx);
        report.acquired.push(best_idx);
        report.kl_history.push(best_kl);
    }

    report.timings.select_secs = start.elapsed().as_secs_f64();
    report.timings.total_secs = report.timings.select_secs;
    Ok(report)
}

/// Similarity-search selection: rank every candidate per target point by
/// distance, then claim round-robin by ascending rank (each target's rank-r
/// pick in target order, skipping already-claimed candidates) until
/// `target_size` is reached. Returned in claim order.
pub fn similarity_search_select(
    x: &VectorDataset,
    g: &VectorDataset,
    target_size: usize,
) -> Result<Vec<usize>> {
    if target_size > g.len() {
        return Err(GioError::TooFewPoints {
            what: "candidate set",
            needed: target_size,
            got: g.len(),
        });
    }
    if x.is_empty() {
        return Err(GioError::TooFewPoints {
            what: "target set",
            needed: 1,
            got: 0,
        });
    }
    if x.dim() != g.dim() {
        return Err(GioError::DimMismatch {
            expected: x.dim(),
            found: g.dim(),
        });
    }
    let rankings: Vec<Vec<usize>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<usize> = (0..g.len()).collect();
            let dists: Vec<f64> = (0..g.len())
                .map(|j| euclidean(x.point(i), g.point(j)))
                .collect();
            order.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap().then(a.cmp(&b)));
            order
        })
        .collect();

    let mut claimed = vec![false; g.len()];
    let mut out = Vec::with_capacity(target_size);
    'outer: for rank in 0..g.len() {
        for ranking in &rankings {
            let candidate = ranking[rank];
            if !claimed[candidate] {
                claimed[candidate] = true;
                out.push(candidate);
                if out.len() == target_size {
                    break 'outer;
                }
            }
        }
    }
    Ok(out)
}

/// Uniform selection without replacement, in draw order.
pub fn random_select(g: &VectorDataset, target_size: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if target_size > g.len() {
        return Err(GioError::TooFewPoints {
            what: "candidate set",
            needed: target_size,
            got: g.len(),
        });
    }
    Ok(rng.sample_indices(g.len(), target_size))
}
