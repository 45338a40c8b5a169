//! One-command reproductions of the analytic sanity checks: self- and
//! negative-consistency, quantization consistency, the derivative-trick
//! speedup, the circle-versus-similarity-search comparison, and the
//! uniform-start smoothing demonstration. Each check builds its synthetic
//! data from the given seed, evaluates a pass predicate, and writes
//! plot-ready CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{naive_hill_climb, similarity_search_select};
use crate::config::GioConfig;
use crate::dataset::VectorDataset;
use crate::error::{GioError, Result};
use crate::kl::kl_averaged;
use crate::optimizer::VInitMode;
use crate::quantizer::{kmeans, KMEANS_MAX_ITERS, KMEANS_TOL};
use crate::report::SelectionReport;
use crate::rng::SeededRng;
use crate::selector::{run_gio, SelectionInit, StopKind, StoppingCriterion, UniformStartConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckName {
    SelfConsistency,
    NegativeConsistency,
    QuantizationConsistency,
    DerivativeSpeedup,
    CircleVsSimilarity,
    UniformSmoothing,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::SelfConsistency,
        CheckName::NegativeConsistency,
        CheckName::QuantizationConsistency,
        CheckName::DerivativeSpeedup,
        CheckName::CircleVsSimilarity,
        CheckName::UniformSmoothing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckName::SelfConsistency => "self_consistency",
            CheckName::NegativeConsistency => "negative_consistency",
            CheckName::QuantizationConsistency => "quantization_consistency",
            CheckName::DerivativeSpeedup => "derivative_speedup",
            CheckName::CircleVsSimilarity => "circle_vs_similarity",
            CheckName::UniformSmoothing => "uniform_smoothing",
        }
    }
}

impl FromStr for CheckName {
    type Err = GioError;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                GioError::InvalidConfig(format!(
                    "unknown check {s:?}; expected one of {}",
                    CheckName::ALL.map(|c| c.as_str()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
}

impl CheckResult {
    fn new(name: CheckName) -> Self {
        Self {
            name: name.as_str().to_string(),
            pass: false,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }
}

/// Run one named check. Artifacts land under `out_dir`; `fast` trims the
/// iteration budget of the timing check.
pub fn run_check(name: CheckName, seed: u64, out_dir: &Path, fast: bool) -> Result<CheckResult> {
    fs::create_dir_all(out_dir).map_err(|source| GioError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    match name {
        CheckName::SelfConsistency => self_consistency(seed, out_dir),
        CheckName::NegativeConsistency => negative_consistency(seed, out_dir),
        CheckName::QuantizationConsistency => quantization_consistency(seed, out_dir),
        CheckName::DerivativeSpeedup => derivative_speedup(seed, out_dir, fast),
        CheckName::CircleVsSimilarity => circle_vs_similarity(seed, out_dir),
        CheckName::UniformSmoothing => uniform_smoothing(seed, out_dir),
    }
}

fn gaussian_cloud(n: usize, center: &[f64], std: f64, rng: &mut SeededRng) -> VectorDataset {
    VectorDataset::from_rows(
        (0..n)
            .map(|_| center.iter().map(|&c| rng.normal(c, std)).collect())
            .collect(),
    )
    .expect("generated cloud")
}

fn uniform_cloud(n: usize, low: f64, high: f64, dim: usize, rng: &mut SeededRng) -> VectorDataset {
    VectorDataset::from_rows(
        (0..n)
            .map(|_| (0..dim).map(|_| rng.uniform(low, high)).collect())
            .collect(),
    )
    .expect("generated cloud")
}

fn write_csv(out_dir: &Path, file: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    let path = out_dir.join(file);
    let mut text = String::with_capacity(rows.len() * 24 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|source| GioError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn kl_curve_rows(report: &SelectionReport) -> Vec<String> {
    report
        .kl_history
        .iter()
        .enumerate()
        .map(|(i, kl)| format!("{},{kl}", i + 1))
        .collect()
}

fn scatter_rows(ds: &VectorDataset, label: &str) -> Vec<String> {
    ds.points()
        .map(|p| format!("{},{},{label}", p[0], p[1]))
        .collect()
}

/// The consistency-check configuration: mean v-init, stop on the first
/// divergence increase, a broad un-normalized uniform start.
fn consistency_config(seed: u64, uniform: UniformStartConfig) -> GioConfig {
    let mut cfg = GioConfig::default();
    cfg.seed = seed;
    cfg.v_init = VInitMode::Mean;
    cfg.stop = StoppingCriterion {
        kind: StopKind::Increase,
        ..StoppingCriterion::default()
    };
    cfg.init.uniform = uniform;
    cfg
}

/// Target and candidates drawn from the same distribution: nearly all of
/// the candidate set should be selected before the divergence turns up.
fn self_consistency(seed: u64, out_dir: &Path) -> Result<CheckResult> {
    let root = SeededRng::new(seed);
    let x = gaussian_cloud(100, &[3.0, 4.0], 0.5f64.sqrt(), &mut root.child("x"));
    let g = gaussian_cloud(100, &[3.0, 4.0], 0.5f64.sqrt(), &mut root.child("g"));
    let uniform = UniformStartConfig {
        size: 150,
        low: 0.0,
        high: 8.0,
        normalize: false,
    };
    let cfg = consistency_config(seed, uniform);
    let report = run_gio(&x, &g, SelectionInit::Uniform(uniform), &cfg)?;
    let fraction = report.selected.len() as f64 / g.len() as f64;

    let mut result = CheckResult::new(CheckName::SelfConsistency);
    result.metrics.insert("selected".into(), report.selected.len() as f64);
    result.metrics.insert("candidates".into(), g.len() as f64);
    result.metrics.insert("fraction".into(), fraction);
    result.pass = fraction >= 0.90;

    let selected = g.select(&report.selected)?;
    let mut rows = scatter_rows(&x, "target");
    rows.extend(scatter_rows(&selected, "selected"));
    result.artifacts.push(write_csv(out_dir, "scatter.csv", "x,y,label", &rows)?);
    result
        .artifacts
        .push(write_csv(out_dir, "kl_curve.csv", "iteration,kl", &kl_curve_rows(&report))?);
    Ok(result)
}

/// Candidates far from the target: nothing should be selected.
fn negative_consistency(seed: u64, out_dir: &Path) -> Result<CheckResult> {
    let root = SeededRng::new(seed);
    let x = gaussian_cloud(100, &[3.0, 4.0], 0.5f64.sqrt(), &mut root.child("x"));
    let g = gaussian_cloud(100, &[300.0, 400.0], 0.5f64.sqrt(), &mut root.child("g"));
    let uniform = UniformStartConfig {
        size: 150,
        low: 0.0,
        high: 8.0,
        normalize: false,
    };
    let cfg = consistency_config(seed, uniform);
    let report = run_gio(&x, &g, SelectionInit::Uniform(uniform), &cfg)?;

    let mut result = CheckResult::new(CheckName::NegativeConsistency);
    result.metrics.insert("selected".into(), report.selected.len() as f64);
    result.pass = report.selected.is_empty();
    let mut rows = scatter_rows(&x, "target");
    rows.extend(scatter_rows(&g, "candidates"));
    result.artifacts.push(write_csv(out_dir, "scatter.csv", "x,y,label", &rows)?);
    Ok(result)
}

/// Quantizing should not move the distribution: the divergence of the data
/// from its own centroids stays small on an absolute scale and tiny next to
/// the divergence from a disjoint far-away cloud.
fn quantization_consistency(seed: u64, out_dir: &Path) -> Result<CheckResult> {
    let root = SeededRng::new(seed);
    let x = gaussian_cloud(400, &[3.0, 4.0], 0.5f64.sqrt(), &mut root.child("x"));
    let model = kmeans(&x, 50, &mut root.child("kmeans"), KMEANS_MAX_ITERS, KMEANS_TOL)?;
    let kl_quant = kl_averaged(&x, &model.centroids, 5, false)?;
    let far = gaussian_cloud(50, &[300.0, 400.0], 0.5f64.sqrt(), &mut root.child("far"));
    let kl_far = kl_averaged(&x, &far, 5, false)?;
    let ratio = kl_quant / kl_far;

    let mut result = CheckResult::new(CheckName::QuantizationConsistency);
    result.metrics.insert("kl_quantized".into(), kl_quant);
    result.metrics.insert("kl_far".into(), kl_far);
    result.metrics.insert("ratio".into(), ratio);
    result.pass = (0.1..=1.0).contains(&kl_quant) && ratio < 0.05;

    let mut rows = scatter_rows(&x, "original");
    rows.extend(scatter_rows(&model.centroids, "centroid"));
    result.artifacts.push(write_csv(out_dir, "scatter.csv", "x,y,label", &rows)?);
    Ok(result)
}

/// Wall-clock comparison of the exhaustive hill-climb against the descent
/// shortcut, plus the scaling claim: the shortcut's per-iteration cost is
/// flat in the candidate count while the hill-climb's grows with it.
fn derivative_speedup(seed: u64, out_dir: &Path, fast: bool) -> Result<CheckResult> {
    let iters = if fast { 20 } else { 100 };
    let root = SeededRng::new(seed);
    let x = gaussian_cloud(100, &[3.0, 4.0], 0.5f64.sqrt(), &mut root.child("x"));
    let d0 = uniform_cloud(20, 0.0, 8.0, 2, &mut root.child("uniform"));

    let mut cfg = GioConfig::default();
    cfg.seed = seed;
    cfg.v_init = VInitMode::Mean;
    cfg.max_iter = iters;
    // A floor no run reaches: only the iteration cap stops the loop, so both
    // methods do exactly `iters` acquisitions.
    cfg.stop = StoppingCriterion {
        kind: StopKind::MinKl,
        min_kl: -1e18,
        ..StoppingCriterion::default()
    };

    let time_pair = |g_size: usize| -> Result<(f64, f64)> {
        let g = uniform_cloud(g_size, 0.0, 8.0, 2, &mut root.child("g"));
        let t0 = Instant::now();
        let naive = naive_hill_climb(&x, &g, &d0, iters, cfg.l)?;
        let t_naive = t0.elapsed().as_secs_f64();
        // The descent side finishes in fractions of a second; take the best
        // of three runs so scheduling noise cannot distort the growth ratio.
        let mut t_gio = f64::INFINITY;
        for _ in 0..3 {
            let t1 = Instant::now();
            let gio = run_gio(&x, &g, SelectionInit::Explicit(d0.clone()), &cfg)?;
            t_gio = t_gio.min(t1.elapsed().as_secs_f64());
            debug_assert_eq!(gio.kl_history.len(), iters);
        }
        debug_assert_eq!(naive.kl_history.len(), iters);
        Ok((t_naive, t_gio))
    };

    let (naive_small, gio_small) = time_pair(2000)?;
    let (naive_big, gio_big) = time_pair(8000)?;

    let ratio = naive_small / gio_small;
    let gio_growth = gio_big / gio_small;
    let naive_growth = naive_big / naive_small;

    let mut result = CheckResult::new(CheckName::DerivativeSpeedup);
    result.metrics.insert("iterations".into(), iters as f64);
    result.metrics.insert("naive_secs_g2000".into(), naive_small);
    result.metrics.insert("gio_secs_g2000".into(), gio_small);
    result.metrics.insert("naive_secs_g8000".into(), naive_big);
    result.metrics.insert("gio_secs_g8000".into(), gio_big);
    result.metrics.insert("speedup_ratio".into(), ratio);
    result.metrics.insert("gio_growth".into(), gio_growth);
    result.metrics.insert("naive_growth".into(), naive_growth);
    result.pass = ratio >= 3.0 && gio_growth < 1.5 && naive_growth >= 3.0;

    let rows = vec![
        format!("naive,2000,{iters},{naive_small}"),
        format!("gio,2000,{iters},{gio_small}"),
        format!("naive,8000,{iters},{naive_big}"),
        format!("gio,8000,{iters},{gio_big}"),
    ];
    result
        .artifacts
        .push(write_csv(out_dir, "bench.csv", "method,g_size,iterations,seconds", &rows)?);
    Ok(result)
}

/// Target points on a ring: selection driven by the distribution favors the
/// enclosed region, while similarity search also drags in points outside
/// the ring at the same selection size.
fn circle_vs_similarity(seed: u64, out_dir: &Path) -> Result<CheckResult> {
    let root = SeededRng::new(seed);
    let radius = 2.0;
    let mut angle_rng = root.child("x");
    let x = VectorDataset::from_rows(
        (0..100)
            .map(|_| {
                let t = angle_rng.uniform(0.0, std::f64::consts::TAU);
                vec![radius * t.cos(), radius * t.sin()]
            })
            .collect(),
    )?;
    let g = uniform_cloud(2000, -3.0, 3.0, 2, &mut root.child("g"));

    let uniform = UniformStartConfig {
        size: 150,
        low: -3.0,
        high: 3.0,
        normalize: false,
    };
    let mut cfg = consistency_config(seed, uniform);
    cfg.max_iter = 2000;
    let report = run_gio(&x, &g, SelectionInit::Uniform(uniform), &cfg)?;

    let inside_fraction = |indices: &[usize]| {
        if indices.is_empty() {
            return 0.0;
        }
        let inside = indices
            .iter()
            .filter(|&&i| {
                let p = g.point(i);
                (p[0] * p[0] + p[1] * p[1]).sqrt() < radius
            })
            .count();
        inside as f64 / indices.len() as f64
    };

    let gio_inside = inside_fraction(&report.selected);
    let similar = similarity_search_select(&x, &g, report.selected.len())?;
    let ss_inside = inside_fraction(&similar);
    let diff = gio_inside - ss_inside;

    let mut result = CheckResult::new(CheckName::CircleVsSimilarity);
    result.metrics.insert("selected".into(), report.selected.len() as f64);
    result.metrics.insert("gio_inside_fraction".into(), gio_inside);
    result.metrics.insert("similarity_inside_fraction".into(), ss_inside);
    result.metrics.insert("difference".into(), diff);
    result.pass = !report.selected.is_empty() && diff >= 0.15;

    let mut rows = scatter_rows(&x, "target");
    rows.extend(scatter_rows(&g.select(&report.selected)?, "gio"));
    rows.extend(scatter_rows(&g.select(&similar)?, "similarity"));
    result.artifacts.push(write_csv(out_dir, "scatter.csv", "x,y,label", &rows)?);
    result
        .artifacts
        .push(write_csv(out_dir, "kl_curve.csv", "iteration,kl", &kl_curve_rows(&report))?);
    Ok(result)
}

/// The same multimodal instance run with and without the uniform start: the
/// start leaves the trajectory alone but flattens the erratic early
/// iterations, measured as the variance of the first ten divergences.
/// Five paired sub-instances are aggregated; a single pair occasionally
/// draws a calm no-start run and says nothing either way.
fn uniform_smoothing(seed: u64, out_dir: &Path) -> Result<CheckResult> {
    const PAIRS: usize = 5;
    let mut result = CheckResult::new(CheckName::UniformSmoothing);
    let mut vars_with = Vec::new();
    let mut vars_without = Vec::new();
    let mut smaller = 0usize;

    for pair in 0..PAIRS {
        let root = SeededRng::new(seed.wrapping_mul(31).wrapping_add(pair as u64));
        let mut center_rng = root.child("centers");
        let centers: Vec<Vec<f64>> = (0..10)
            .map(|_| vec![center_rng.uniform(-4.0, 4.0), center_rng.uniform(-4.0, 4.0)])
            .collect();
        let mut point_rng = root.child("points");
        let mut rows = Vec::new();
        for c in &centers {
            for _ in 0..50 {
                rows.push(vec![point_rng.normal(c[0], 0.4), point_rng.normal(c[1], 0.4)]);
            }
        }
        let pool = VectorDataset::from_rows(rows)?;
        // Independent subsamples stand in for separately quantized target
        // and candidate sides of the same data.
        let x_c = pool.select(&root.child("xc").sample_indices(pool.len(), 100))?;
        let g_c = pool.select(&root.child("gc").sample_indices(pool.len(), 100))?;

        let mut cfg = GioConfig::default();
        cfg.seed = seed.wrapping_mul(31).wrapping_add(pair as u64);
        cfg.v_init = VInitMode::Jump;
        cfg.max_iter = 25;
        cfg.stop = StoppingCriterion {
            kind: StopKind::MinKl,
            min_kl: -1e18,
            ..StoppingCriterion::default()
        };
        let uniform = UniformStartConfig {
            size: 20,
            low: -5.0,
            high: 5.0,
            normalize: false,
        };
        let with = run_gio(&x_c, &g_c, SelectionInit::Uniform(uniform), &cfg)?;
        let without = run_gio(&x_c, &g_c, SelectionInit::None, &cfg)?;

        let variance = |xs: &[f64]| {
            let head = &xs[..xs.len().min(10)];
            let mean = head.iter().sum::<f64>() / head.len() as f64;
            head.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / head.len() as f64
        };
        let vw = variance(&with.kl_history);
        let vwo = variance(&without.kl_history);
        if vw < vwo {
            smaller += 1;
        }
        result
            .metrics
            .insert(format!("variance_with_start_{pair}"), vw);
        result
            .metrics
            .insert(format!("variance_without_start_{pair}"), vwo);
        vars_with.push(vw);
        vars_without.push(vwo);

        if pair == 0 {
            result.artifacts.push(write_csv(
                out_dir,
                "kl_with_start.csv",
                "iteration,kl",
                &kl_curve_rows(&with),
            )?);
            result.artifacts.push(write_csv(
                out_dir,
                "kl_without_start.csv",
                "iteration,kl",
                &kl_curve_rows(&without),
            )?);
        }
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_with = mean(&vars_with);
    let mean_without = mean(&vars_without);
    result.metrics.insert("variance_with_start".into(), mean_with);
    result
        .metrics
        .insert("variance_without_start".into(), mean_without);
    result.metrics.insert("pairs_smaller".into(), smaller as f64);
    result.pass = mean_with < mean_without && smaller * 2 > PAIRS;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_names_round_trip() {
        for name in CheckName::ALL {
            assert_eq!(CheckName::from_str(name.as_str()).unwrap(), name);
        }
        assert!(CheckName::from_str("nope").is_err());
    }

    #[test]
    fn quantization_consistency_passes() {
        let dir = tempfile::tempdir().unwrap();
        let result = run_check(CheckName::QuantizationConsistency, 2, dir.path(), true).unwrap();
        assert!(result.pass, "metrics: {:?}", result.metrics);
        assert!(result.artifacts.iter().all(|p| p.exists()));
    }

    #[test]
    fn negative_consistency_passes() {
        let dir = tempfile::tempdir().unwrap();
        let result = run_check(CheckName::NegativeConsistency, 0, dir.path(), true).unwrap();
        assert!(result.pass, "metrics: {:?}", result.metrics);
    }

    #[test]
    fn uniform_smoothing_passes() {
        let dir = tempfile::tempdir().unwrap();
        let result = run_check(CheckName::UniformSmoothing, 0, dir.path(), true).unwrap();
        assert!(result.pass, "metrics: {:?}", result.metrics);
    }
}
