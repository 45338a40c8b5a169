//! Python bindings for the selection engine: datasets, k-means
//! quantization, the divergence estimators and gradient, the selection
//! loop, and the baseline methods.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use gio_core::baselines;
use gio_core::checks;
use gio_core::config::{GioConfig, InitSpec};
use gio_core::dataset::{self, DataFormat, VectorDataset};
use gio_core::error::GioError;
use gio_core::kl;
use gio_core::optimizer::{ScaleMode, VInitMode};
use gio_core::pipeline;
use gio_core::quantizer;
use gio_core::report::SelectionReport;
use gio_core::rng::SeededRng;
use gio_core::selector::{self, SelectionInit, StopKind};

fn to_py_err(err: GioError) -> PyErr {
    match err {
        GioError::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_format(s: &str) -> PyResult<DataFormat> {
    DataFormat::from_str(s).map_err(to_py_err)
}

/// An immutable vector dataset.
#[pyclass(name = "Dataset")]
#[derive(Clone)]
struct PyDataset {
    inner: VectorDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: VectorDataset::from_rows(points).map_err(to_py_err)?,
        })
    }

    /// Load from a file; format is "vectors-csv" or "tabular-tsv".
    #[staticmethod]
    #[pyo3(signature = (path, format="vectors-csv"))]
    fn load(path: PathBuf, format: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::load_dataset(&path, parse_format(format)?).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        dataset::save_dataset(&self.inner, &path, parse_format(format)?).map_err(to_py_err)
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().map(|p| p.to_vec()).collect()
    }

    fn ids(&self) -> Option<Vec<String>> {
        self.inner.ids().map(|ids| ids.to_vec())
    }

    fn payloads(&self) -> Option<Vec<String>> {
        self.inner.payloads().map(|p| p.to_vec())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean()
    }

    fn normalized(&self) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::normalize_rows(&self.inner).map_err(to_py_err)?,
        })
    }

    fn select(&self, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.select(&indices).map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// K centroids plus the per-point assignment that produced them.
#[pyclass(name = "ClusterModel")]
struct PyClusterModel {
    inner: quantizer::ClusterModel,
}

#[pymethods]
impl PyClusterModel {
    fn centroids(&self) -> PyDataset {
        PyDataset {
            inner: self.inner.centroids.clone(),
        }
    }

    fn assignment(&self) -> Vec<usize> {
        self.inner.assignment.clone()
    }

    fn membership_counts(&self) -> Vec<usize> {
        self.inner.membership_counts()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn inertia(&self) -> f64 {
        self.inner.inertia
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn __repr__(&self) -> String {
        format!(
            "ClusterModel(k={}, source_count={}, inertia={})",
            self.inner.k(),
            self.inner.source_count,
            self.inner.inertia
        )
    }
}

/// Outcome of a selection run.
#[pyclass(name = "SelectionReport")]
struct PyReport {
    inner: SelectionReport,
}

#[pymethods]
impl PyReport {
    /// Centroid indices to explode (initialization subset, then
    /// acquisitions; duplicates possible after resets).
    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.inner.selected.clone()
    }

    #[getter]
    fn acquired(&self) -> Vec<usize> {
        self.inner.acquired.clone()
    }

    #[getter]
    fn kl_history(&self) -> Vec<f64> {
        self.inner.kl_history.clone()
    }

    #[getter]
    fn termination(&self) -> String {
        serde_json::to_value(self.inner.termination)
            .expect("reason serializes")
            .as_str()
            .unwrap()
            .to_string()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn resets_used(&self) -> usize {
        self.inner.resets_used
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "SelectionReport(selected={}, termination={}, resets_used={})",
            self.inner.selected.len(),
            self.termination(),
            self.inner.resets_used
        )
    }
}

/// Lloyd's k-means from k-means++ seeding, deterministic under the seed.
#[pyfunction]
#[pyo3(signature = (ds, k, seed=0, max_iters=100, tol=1e-4))]
fn kmeans(ds: &PyDataset, k: usize, seed: u64, max_iters: usize, tol: f64) -> PyResult<PyClusterModel> {
    let mut rng = SeededRng::new(seed).child("kmeans");
    Ok(PyClusterModel {
        inner: quantizer::kmeans(&ds.inner, k, &mut rng, max_iters, tol).map_err(to_py_err)?,
    })
}

/// Rows of `source` whose cluster assignment falls in `selected`.
#[pyfunction]
fn explode(selected: Vec<usize>, model: &PyClusterModel, source: &PyDataset) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: quantizer::explode(&selected, &model.inner, &source.inner).map_err(to_py_err)?,
    })
}

/// Rank-averaged kNN estimate of KL(target || reference).
#[pyfunction]
#[pyo3(signature = (target, reference, l=5, discard_nearest=false))]
fn kl_averaged(target: &PyDataset, reference: &PyDataset, l: usize, discard_nearest: bool) -> PyResult<f64> {
    kl::kl_averaged(&target.inner, &reference.inner, l, discard_nearest).map_err(to_py_err)
}

/// Single-order kNN estimate of KL(target || reference) at order k.
#[pyfunction]
#[pyo3(signature = (target, reference, k, discard_nearest=false))]
fn kl_single_k(target: &PyDataset, reference: &PyDataset, k: usize, discard_nearest: bool) -> PyResult<f64> {
    kl::kl_single_k(&target.inner, &reference.inner, k, discard_nearest).map_err(to_py_err)
}

/// Gradient of kl_averaged(target, reference + {v}) with respect to v.
#[pyfunction]
#[pyo3(signature = (target, reference, v, l=5))]
fn kl_gradient(target: &PyDataset, reference: &PyDataset, v: Vec<f64>, l: usize) -> PyResult<Vec<f64>> {
    kl::kl_gradient(&target.inner, &reference.inner, &v, l).map_err(to_py_err)
}

/// Run the selection loop over pre-quantized centroid sets.
#[pyfunction]
#[pyo3(signature = (
    x_centroids, g_centroids, *, seed=0, l=5, lr=0.01, grad_desc_iter=50,
    v_init="prev_opt", scale="auto", max_iter=1000, stop="increase",
    min_difference=0.0, min_kl=0.0, max_data_fraction=1.0,
    max_sequential_increases=3, resets_allowed=false, max_resets=2,
    restart_prob=0.0, discard_nearest=false, init="uniform",
    uniform_size=20, uniform_low=-1.0, uniform_high=1.0,
    uniform_normalize=true, initial=None
))]
#[allow(clippy::too_many_arguments)]
fn run_gio(
    x_centroids: &PyDataset,
    g_centroids: &PyDataset,
    seed: u64,
    l: usize,
    lr: f64,
    grad_desc_iter: usize,
    v_init: &str,
    scale: &str,
    max_iter: usize,
    stop: &str,
    min_difference: f64,
    min_kl: f64,
    max_data_fraction: f64,
    max_sequential_increases: usize,
    resets_allowed: bool,
    max_resets: usize,
    restart_prob: f64,
    discard_nearest: bool,
    init: &str,
    uniform_size: usize,
    uniform_low: f64,
    uniform_high: f64,
    uniform_normalize: bool,
    initial: Option<&PyDataset>,
) -> PyResult<PyReport> {
    let mut cfg = GioConfig::default();
    cfg.seed = seed;
    cfg.l = l;
    cfg.lr = lr;
    cfg.grad_desc_iter = grad_desc_iter;
    cfg.v_init = VInitMode::from_str(v_init).map_err(to_py_err)?;
    cfg.scale = ScaleMode::from_str(scale).map_err(to_py_err)?;
    cfg.max_iter = max_iter;
    cfg.stop.kind = match stop {
        "increase" => StopKind::Increase,
        "min_difference" => StopKind::MinDifference,
        "min_kl" => StopKind::MinKl,
        "data_size" => StopKind::DataSize,
        "seq_increase" => StopKind::SequentialIncreaseTolerance,
        "max_resets" => StopKind::MaxResets,
        other => return Err(PyValueError::new_err(format!("unknown stop {other:?}"))),
    };
    cfg.stop.min_difference = min_difference;
    cfg.stop.min_kl = min_kl;
    cfg.stop.max_data_fraction = max_data_fraction;
    cfg.stop.max_sequential_increases = max_sequential_increases;
    cfg.stop.resets_allowed = resets_allowed;
    cfg.stop.max_resets = max_resets;
    cfg.restart_prob = restart_prob;
    cfg.discard_nearest = discard_nearest;
    let parsed = InitSpec::from_str(init).map_err(to_py_err)?;
    cfg.init.kind = parsed.kind;
    cfg.init.subset_fraction = parsed.subset_fraction;
    cfg.init.file = parsed.file;
    cfg.init.uniform.size = uniform_size;
    cfg.init.uniform.low = uniform_low;
    cfg.init.uniform.high = uniform_high;
    cfg.init.uniform.normalize = uniform_normalize;

    // An explicit `initial` dataset overrides the `init` string.
    let resolved = match initial {
        Some(d) => SelectionInit::Explicit(d.inner.clone()),
        None => pipeline::resolve_init(&cfg, &SeededRng::new(cfg.seed)).map_err(to_py_err)?,
    };
    Ok(PyReport {
        inner: selector::run_gio(&x_centroids.inner, &g_centroids.inner, resolved, &cfg)
            .map_err(to_py_err)?,
    })
}

/// Exhaustive greedy selection (the correctness and timing oracle).
#[pyfunction]
#[pyo3(signature = (target, candidates, iters, l=5, initial=None))]
fn naive_hill_climb(
    target: &PyDataset,
    candidates: &PyDataset,
    iters: usize,
    l: usize,
    initial: Option<&PyDataset>,
) -> PyResult<PyReport> {
    let empty = VectorDataset::empty(target.inner.dim());
    let d0 = initial.map(|d| d.inner.clone()).unwrap_or(empty);
    Ok(PyReport {
        inner: baselines::naive_hill_climb(&target.inner, &candidates.inner, &d0, iters, l)
            .map_err(to_py_err)?,
    })
}

/// Round-robin retrieval of each target point's nearest candidates.
#[pyfunction]
fn similarity_search_select(target: &PyDataset, candidates: &PyDataset, target_size: usize) -> PyResult<Vec<usize>> {
    baselines::similarity_search_select(&target.inner, &candidates.inner, target_size)
        .map_err(to_py_err)
}

/// Uniform selection without replacement.
#[pyfunction]
#[pyo3(signature = (candidates, target_size, seed=0))]
fn random_select(candidates: &PyDataset, target_size: usize, seed: u64) -> PyResult<Vec<usize>> {
    let mut rng = SeededRng::new(seed).child("subset");
    baselines::random_select(&candidates.inner, target_size, &mut rng).map_err(to_py_err)
}

/// Run one analytic check; returns (pass, metrics dict).
#[pyfunction]
#[pyo3(signature = (name, seed=0, out_dir="./check_out", fast=false))]
fn run_check(
    name: &str,
    seed: u64,
    out_dir: &str,
    fast: bool,
) -> PyResult<(bool, std::collections::BTreeMap<String, f64>)> {
    let check = checks::CheckName::from_str(name).map_err(to_py_err)?;
    let dir = PathBuf::from(out_dir).join(check.as_str());
    let result = checks::run_check(check, seed, &dir, fast).map_err(to_py_err)?;
    Ok((result.pass, result.metrics))
}

#[pymodule]
fn pygio(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyClusterModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(explode, m)?)?;
    m.add_function(wrap_pyfunction!(kl_averaged, m)?)?;
    m.add_function(wrap_pyfunction!(kl_single_k, m)?)?;
    m.add_function(wrap_pyfunction!(kl_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(run_gio, m)?)?;
    m.add_function(wrap_pyfunction!(naive_hill_climb, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_search_select, m)?)?;
    m.add_function(wrap_pyfunction!(random_select, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
