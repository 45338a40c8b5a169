//! End-to-end selection pipeline: quantize the target and candidate sets,
//! run the selection loop on the centroids, and explode the chosen
//! centroids back to source rows.

use std::time::Instant;

use crate::config::{GioConfig, InitKind};
use crate::dataset::{load_dataset, DataFormat, VectorDataset};
use crate::error::{GioError, Result};
use crate::quantizer::{kmeans, ClusterModel};
use crate::report::SelectionReport;
use crate::rng::SeededRng;
use crate::selector::{run_gio, SelectionInit};

/// Everything a selection run produces.
pub struct SelectOutcome {
    pub report: SelectionReport,
    pub target_model: ClusterModel,
    pub candidate_model: ClusterModel,
    /// Candidate source rows to emit, in source order, already repeated by
    /// cluster selection multiplicity.
    pub selected_rows: Vec<usize>,
}

/// Quantize, select, and resolve the selected clusters to source rows.
///
/// The target and candidate sets are quantized by independent seeded
/// k-means runs. An explicit initial set (`init.kind = file`) is quantized
/// alongside them, with its cluster count capped at its size.
pub fn run_select(
    target: &VectorDataset,
    candidates: &VectorDataset,
    cfg: &GioConfig,
) -> Result<SelectOutcome> {
    cfg.validate()?;
    let total_start = Instant::now();
    let root = SeededRng::new(cfg.seed);

    let quant_start = Instant::now();
    let target_model = kmeans(
        target,
        cfg.effective_k_target(),
        &mut root.child("kmeans-target"),
        cfg.kmeans_max_iters,
        cfg.kmeans_tol,
    )?;
    let candidate_model = kmeans(
        candidates,
        cfg.effective_k_candidates(),
        &mut root.child("kmeans-candidates"),
        cfg.kmeans_max_iters,
        cfg.kmeans_tol,
    )?;
    let init = resolve_init(cfg, &root)?;
    let quantize_secs = quant_start.elapsed().as_secs_f64();

    let mut report = run_gio(&target_model.centroids, &candidate_model.centroids, init, cfg)?;

    let explode_start = Instant::now();
    let selected_rows = selected_rows_with_multiplicity(
        &report.selected,
        &candidate_model.assignment,
        candidate_model.k(),
    )?;
    report.selected_rows = Some(selected_rows.len());
    report.timings.quantize_secs = quantize_secs;
    report.timings.explode_secs = explode_start.elapsed().as_secs_f64();
    report.timings.total_secs = total_start.elapsed().as_secs_f64();

    Ok(SelectOutcome {
        report,
        target_model,
        candidate_model,
        selected_rows,
    })
}

/// Turn the configured initialization into concrete data.
pub fn resolve_init(cfg: &GioConfig, root: &SeededRng) -> Result<SelectionInit> {
    Ok(match cfg.init.kind {
        InitKind::None => SelectionInit::None,
        InitKind::Uniform => SelectionInit::Uniform(cfg.init.uniform),
        InitKind::Subset => SelectionInit::Subset {
            fraction: cfg.init.subset_fraction,
        },
        InitKind::File => {
            let path = cfg.init.file.as_ref().ok_or_else(|| {
                GioError::InvalidConfig("init kind is file but no path given".into())
            })?;
            // Formats are sniffed by extension: .tsv means tabular.
            let format = match path.extension().and_then(|e| e.to_str()) {
                Some("tsv") => DataFormat::TabularTsv,
                _ => DataFormat::VectorsCsv,
            };
            let ds = load_dataset(path, format)?;
            if ds.is_empty() {
                SelectionInit::None
            } else {
                let k = cfg.effective_k_candidates().min(ds.len());
                let model = kmeans(
                    &ds,
                    k,
                    &mut root.child("kmeans-init"),
                    cfg.kmeans_max_iters,
                    cfg.kmeans_tol,
                )?;
                SelectionInit::Explicit(model.centroids)
            }
        }
    })
}

/// Source rows for a selection, in source order, each row repeated once per
/// selection of its cluster. Duplicated cluster picks after a reset weight
/// that cluster's rows by their multiplicity.
pub fn selected_rows_with_multiplicity(
    selected: &[usize],
    assignment: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    let mut multiplicity = vec![0usize; k];
    for &idx in selected {
        if idx >= k {
            return Err(GioError::ClusterIndexOutOfRange { index: idx, k });
        }
        multiplicity[idx] += 1;
    }
    let mut rows = Vec::new();
    for (row, &cluster) in assignment.iter().enumerate() {
        for _ in 0..multiplicity[cluster] {
            rows.push(row);
        }
    }
    Ok(rows)
}
