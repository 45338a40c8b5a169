//! The outer selection loop: descend to a virtual optimum, snap to the
//! nearest unselected candidate centroid, record the divergence of the
//! grown set, and consult the stopping criterion.
//!
//! The divergence recorded each iteration is computed after the snapped
//! real centroid joins the selected set, not at the virtual optimum, so
//! stopping always reflects what was actually selected. For the
//! increase-style criteria the triggering acquisition is rolled back on
//! stop: a point whose addition raised the divergence contributed no
//! information, which is also what makes a far-away candidate pool yield
//! an empty selection rather than one stray point.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::GioConfig;
use crate::dataset::{euclidean, normalize_rows, VectorDataset};
use crate::error::{GioError, Result};
use crate::kl::kl_averaged;
use crate::optimizer::{descend, init_v};
use crate::report::SelectionReport;
use crate::rng::SeededRng;

/// Stopping-rule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    /// Stop the moment the divergence rises above the previous value.
    Increase,
    /// Stop when the per-step improvement falls below `min_difference`.
    MinDifference,
    /// Stop once the divergence reaches `min_kl`.
    MinKl,
    /// Stop once `max_data_fraction` of the candidates are selected.
    DataSize,
    /// Tolerate up to `max_sequential_increases - 1` consecutive rises.
    SequentialIncreaseTolerance,
    /// Like `Increase` but each trigger consumes a reset until the budget
    /// `max_resets` is spent.
    MaxResets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingCriterion {
    pub kind: StopKind,
    pub min_difference: f64,
    pub min_kl: f64,
    pub max_data_fraction: f64,
    pub max_sequential_increases: usize,
    /// When the active kind fires and resets remain, restore the full
    /// candidate pool (permitting duplicate picks) instead of stopping.
    pub resets_allowed: bool,
    pub max_resets: usize,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        Self {
            kind: StopKind::Increase,
            min_difference: 0.0,
            min_kl: 0.0,
            max_data_fraction: 1.0,
            max_sequential_increases: 3,
            resets_allowed: false,
            max_resets: 2,
        }
    }
}

impl StoppingCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_data_fraction > 0.0 && self.max_data_fraction <= 1.0) {
            return Err(GioError::InvalidConfig(format!(
                "max_data_fraction {} outside (0, 1]",
                self.max_data_fraction
            )));
        }
        if self.max_sequential_increases == 0 {
            return Err(GioError::InvalidConfig(
                "max_sequential_increases must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    KlIncrease,
    MinDifference,
    MinKl,
    DataSize,
    SequentialIncreases,
    /// Candidate pool ran out without reset permission.
    Exhausted,
    MaxIterations,
}

/// Verdict of [`should_stop`] after an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
    Reset,
}

/// Evolving selection state. Before any reset `selected` is duplicate-free
/// and disjoint from `remaining`; a reset relaxes that.
#[derive(Debug, Clone)]
pub struct SelectionState {
    /// Acquired candidate-centroid indices, in acquisition order.
    pub selected: Vec<usize>,
    pub remaining: BTreeSet<usize>,
    /// One divergence value per acquisition.
    pub kl_history: Vec<f64>,
    pub resets_used: usize,
    pub prev_v_opt: Option<Vec<f64>>,
    /// Divergence of the initial set, when one exists; the comparison point
    /// for the first acquisition.
    pub baseline_kl: Option<f64>,
    /// Centroids pre-selected by a subset initialization; they count toward
    /// the data-size criterion.
    pub pre_selected: usize,
}

impl SelectionState {
    fn new(total_candidates: usize) -> Self {
        Self {
            selected: Vec::new(),
            remaining: (0..total_candidates).collect(),
            kl_history: Vec::new(),
            resets_used: 0,
            prev_v_opt: None,
            baseline_kl: None,
            pre_selected: 0,
        }
    }
}

/// Uniform start: seed the estimation set with uniformly drawn points.
/// They smooth the early iterations without moving the optimum, and are
/// excluded from the reported selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniformStartConfig {
    pub size: usize,
    pub low: f64,
    pub high: f64,
    /// Project the drawn points onto the unit sphere; for normalized
    /// embedding spaces.
    pub normalize: bool,
}

impl Default for UniformStartConfig {
    fn default() -> Self {
        Self {
            size: 20,
            low: -1.0,
            high: 1.0,
            normalize: true,
        }
    }
}

impl UniformStartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size > 0 && !(self.low < self.high) {
            return Err(GioError::InvalidConfig(format!(
                "uniform start needs low < high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn draw(&self, dim: usize, rng: &mut SeededRng) -> Result<VectorDataset> {
        self.validate()?;
        let rows: Vec<Vec<f64>> = (0..self.size)
            .map(|_| (0..dim).map(|_| rng.uniform(self.low, self.high)).collect())
            .collect();
        let ds = VectorDataset::from_rows(rows)?;
        if self.normalize && !ds.is_empty() {
            normalize_rows(&ds)
        } else {
            Ok(ds)
        }
    }
}

/// How the selected set is seeded, resolved to concrete data.
pub enum SelectionInit {
    None,
    Uniform(UniformStartConfig),
    /// Pre-select a random fraction of the candidate centroids.
    Subset { fraction: f64 },
    /// Explicit starting centroids (an existing train set, quantized).
    Explicit(VectorDataset),
}

/// The remaining candidate centroid nearest to `v_opt`; ties break to the
/// lowest index.
pub fn nearest_candidate(
    v_opt: &[f64],
    remaining: &BTreeSet<usize>,
    centroids: &VectorDataset,
) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &idx in remaining {
        let d = euclidean(centroids.point(idx), v_opt);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, idx)),
        }
    }
    best.map(|(_, idx)| idx).ok_or(GioError::NoRemainingCandidates)
}

/// Pure stopping decision over the state's history and counters. A reset is
/// returned instead of a stop only while `resets_allowed` and the budget is
/// unspent.
pub fn should_stop(
    criterion: &StoppingCriterion,
    state: &SelectionState,
    total_candidates: usize,
) -> StopDecision {
    let last = match state.kl_history.last() {
        Some(&v) => v,
        None => return StopDecision::Continue,
    };
    let prev = if state.kl_history.len() >= 2 {
        Some(state.kl_history[state.kl_history.len() - 2])
    } else {
        state.baseline_kl
    };

    let fired = match criterion.kind {
        StopKind::Increase | StopKind::MaxResets => match prev {
            Some(p) if last > p => Some(StopReason::KlIncrease),
            _ => None,
        },
        StopKind::MinDifference => match prev {
            Some(p) if p - last < criterion.min_difference => Some(StopReason::MinDifference),
            _ => None,
        },
        StopKind::MinKl => (last <= criterion.min_kl).then_some(StopReason::MinKl),
        StopKind::DataSize => {
            let target = (criterion.max_data_fraction * total_candidates as f64).round() as usize;
            let count = state.pre_selected + state.selected.len();
            (count >= target).then_some(StopReason::DataSize)
        }
        StopKind::SequentialIncreaseTolerance => {
            let mut rises = 0usize;
            let series: Vec<f64> = state
                .baseline_kl
                .iter()
                .copied()
                .chain(state.kl_history.iter().copied())
                .collect();
            for w in series.windows(2).rev() {
                if w[1] > w[0] {
                    rises += 1;
                } else {
                    break;
                }
            }
            (rises >= criterion.max_sequential_increases).then_some(StopReason::SequentialIncreases)
        }
    };

    match fired {
        None => StopDecision::Continue,
        Some(reason) => {
            if criterion.resets_allowed && state.resets_used < criterion.max_resets {
                StopDecision::Reset
            } else {
                StopDecision::Stop(reason)
            }
        }
    }
}

/// Run the full selection loop over pre-quantized centroid sets.
///
/// Per iteration: initialize `v`, gradient-descend it, snap to the nearest
/// remaining candidate, move that candidate into the selected set, record
/// the divergence of the grown set, and apply the stopping criterion, under
/// a hard `max_iter` cap. The uniform start (and any explicit start)
/// participates in estimation but only subset pre-selections and
/// acquisitions appear in `selected`.
pub fn run_gio(
    x_centroids: &VectorDataset,
    g_centroids: &VectorDataset,
    init: SelectionInit,
    cfg: &GioConfig,
) -> Result<SelectionReport> {
    cfg.validate()?;
    if g_centroids.is_empty() {
        return Err(GioError::TooFewPoints {
            what: "candidate set",
            needed: 1,
            got: 0,
        });
    }
    if x_centroids.len() < cfg.l + 1 {
        return Err(GioError::TooFewPoints {
            what: "target set (need l+1)",
            needed: cfg.l + 1,
            got: x_centroids.len(),
        });
    }
    if x_centroids.dim() != g_centroids.dim() {
        return Err(GioError::DimMismatch {
            expected: x_centroids.dim(),
            found: g_centroids.dim(),
        });
    }

    let start = Instant::now();
    let dim = x_centroids.dim();
    let total = g_centroids.len();
    let root = SeededRng::new(cfg.seed);
    let mut jump_rng = root.child("jump");
    let mut restart_rng = root.child("restart");
    let mut uniform_rng = root.child("uniform");
    let mut subset_rng = root.child("subset");

    let mut state = SelectionState::new(total);
    // Estimation set: uniform start, then any initialization subset, then
    // acquisitions, in that order.
    let mut d_flat: Vec<f64> = Vec::new();
    let mut report = SelectionReport::new(cfg.clone());

    match init {
        SelectionInit::None => {}
        SelectionInit::Uniform(ucfg) => {
            let u = ucfg.draw(dim, &mut uniform_rng)?;
            d_flat.extend_from_slice(u.as_flat());
        }
        SelectionInit::Subset { fraction } => {
            let count = (fraction * total as f64).round() as usize;
            let picked = subset_rng.sample_indices(total, count.min(total));
            for &idx in &picked {
                d_flat.extend_from_slice(g_centroids.point(idx));
                state.remaining.remove(&idx);
            }
            state.pre_selected = picked.len();
            report.selected = picked;
        }
        SelectionInit::Explicit(ds) => {
            if !ds.is_empty() && ds.dim() != dim {
                return Err(GioError::DimMismatch {
                    expected: dim,
                    found: ds.dim(),
                });
            }
            d_flat.extend_from_slice(ds.as_flat());
        }
    }

    let d_len = |flat: &Vec<f64>| flat.len() / dim;
    if d_len(&d_flat) > 0 {
        let d_set = VectorDataset::from_flat(d_flat.clone(), dim)?;
        state.baseline_kl = Some(kl_averaged(
            x_centroids,
            &d_set,
            cfg.l,
            cfg.discard_nearest,
        )?);
    }

    let descent_cfg = cfg.descent();
    let mut reason = StopReason::MaxIterations;
    let rollback_on_stop = matches!(cfg.stop.kind, StopKind::Increase | StopKind::MaxResets);

    for iteration in 1..=cfg.max_iter {
        report.iterations = iteration;
        if state.remaining.is_empty() {
            if cfg.stop.resets_allowed && state.resets_used < cfg.stop.max_resets {
                state.remaining = (0..total).collect();
                state.resets_used += 1;
            } else {
                reason = StopReason::Exhausted;
                break;
            }
        }

        let d_set = VectorDataset::from_flat(d_flat.clone(), dim)?;
        let v0 = init_v(
            cfg.v_init,
            x_centroids,
            state.prev_v_opt.as_deref(),
            &mut jump_rng,
        )?;
        let (v_opt, _) = descend(
            x_centroids,
            &d_set,
            &v0,
            &descent_cfg,
            cfg.l,
            &mut restart_rng,
        )?;
        let best = nearest_candidate(&v_opt, &state.remaining, g_centroids)?;
        state.prev_v_opt = Some(v_opt);

        state.remaining.remove(&best);
        state.selected.push(best);
        d_flat.extend_from_slice(g_centroids.point(best));
        let kl = kl_averaged(
            x_centroids,
            &VectorDataset::from_flat(d_flat.clone(), dim)?,
            cfg.l,
            cfg.discard_nearest,
        )?;
        debug_assert!(kl.is_finite());
        state.kl_history.push(kl);

        match should_stop(&cfg.stop, &state, total) {
            StopDecision::Continue => {}
            StopDecision::Reset => {
                state.remaining = (0..total).collect();
                state.resets_used += 1;
            }
            StopDecision::Stop(r) => {
                if rollback_on_stop && r == StopReason::KlIncrease {
                    state.selected.pop();
                    state.kl_history.pop();
                    d_flat.truncate(d_flat.len() - dim);
                }
                reason = r;
                break;
            }
        }
    }

    report.selected.extend(state.selected.iter().copied());
    report.acquired = state.selected;
    report.kl_history = state.kl_history;
    report.termination = reason;
    report.resets_used = state.resets_used;
    report.timings.select_secs = start.elapsed().as_secs_f64();
    report.timings.total_secs = report.timings.select_secs;
    Ok(report)
}
