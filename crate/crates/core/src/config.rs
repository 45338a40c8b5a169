//! Run configuration: every algorithm knob with its default.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GioError, Result};
use crate::optimizer::{DescentConfig, ScaleMode, VInitMode};
use crate::quantizer::{KMEANS_MAX_ITERS, KMEANS_TOL};
use crate::selector::{StopKind, StoppingCriterion, UniformStartConfig};

/// How the selected set is seeded before the first acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Start from nothing.
    None,
    /// Start from uniformly drawn points; they take part in estimation but
    /// are stripped from the reported selection.
    Uniform,
    /// Start from a random fraction of the candidate centroids; these count
    /// as selected.
    Subset,
    /// Start from an explicit dataset loaded from a file (quantized
    /// alongside the candidates).
    File,
}

/// Serializable description of the initialization, echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    pub uniform: UniformStartConfig,
    pub subset_fraction: f64,
    pub file: Option<PathBuf>,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            kind: InitKind::Uniform,
            uniform: UniformStartConfig::default(),
            subset_fraction: 0.25,
            file: None,
        }
    }
}

impl FromStr for InitSpec {
    type Err = GioError;

    /// Accepts `none`, `uniform`, `subset=F` and `file=PATH`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = InitSpec::default();
        if s == "none" {
            spec.kind = InitKind::None;
        } else if s == "uniform" {
            spec.kind = InitKind::Uniform;
        } else if let Some(frac) = s.strip_prefix("subset=") {
            spec.kind = InitKind::Subset;
            spec.subset_fraction = frac.parse().map_err(|_| {
                GioError::InvalidConfig(format!("bad subset fraction {frac:?}"))
            })?;
        } else if let Some(path) = s.strip_prefix("file=") {
            spec.kind = InitKind::File;
            spec.file = Some(PathBuf::from(path));
        } else {
            return Err(GioError::InvalidConfig(format!(
                "unknown init {s:?}; expected none, uniform, subset=F or file=PATH"
            )));
        }
        Ok(spec)
    }
}

/// Every knob of the selection pipeline. Defaults follow the reference
/// parameterization: K=1500, l=5, 1000 iterations max, stop on the first
/// divergence increase, prev_opt v-init, 50 descent steps at lr 0.01 with
/// auto scaling, uniform start of 20 points in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GioConfig {
    pub seed: u64,
    /// Cluster count for quantization; `k_target` / `k_candidates`
    /// override it per side when set.
    pub k: usize,
    pub k_target: Option<usize>,
    pub k_candidates: Option<usize>,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    /// Target-side neighbor order of the divergence estimator.
    pub l: usize,
    /// Skip each target point's nearest reference in the estimate; for runs
    /// where the candidate set is the target set.
    pub discard_nearest: bool,
    pub lr: f64,
    pub grad_desc_iter: usize,
    pub scale: ScaleMode,
    pub v_init: VInitMode,
    pub restart_prob: f64,
    /// Hard cap on acquisitions, layered over every stopping criterion.
    pub max_iter: usize,
    pub stop: StoppingCriterion,
    pub init: InitSpec,
}

impl Default for GioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 1500,
            k_target: None,
            k_candidates: None,
            kmeans_max_iters: KMEANS_MAX_ITERS,
            kmeans_tol: KMEANS_TOL,
            l: 5,
            discard_nearest: false,
            lr: 0.01,
            grad_desc_iter: 50,
            scale: ScaleMode::Auto,
            v_init: VInitMode::PrevOpt,
            restart_prob: 0.0,
            max_iter: 1000,
            stop: StoppingCriterion::default(),
            init: InitSpec::default(),
        }
    }
}

impl GioConfig {
    pub fn descent(&self) -> DescentConfig {
        DescentConfig {
            lr: self.lr,
            iters: self.grad_desc_iter,
            scale_mode: self.scale,
            v_init_mode: self.v_init,
            restart_prob: self.restart_prob,
        }
    }

    pub fn effective_k_target(&self) -> usize {
        self.k_target.unwrap_or(self.k)
    }

    pub fn effective_k_candidates(&self) -> usize {
        self.k_candidates.unwrap_or(self.k)
    }

    /// Cross-field validation, run before any computation.
    pub fn validate(&self) -> Result<()> {
        self.descent().validate()?;
        if self.k == 0 || self.effective_k_target() == 0 || self.effective_k_candidates() == 0 {
            return Err(GioError::InvalidConfig("k must be at least 1".into()));
        }
        if self.l == 0 {
            return Err(GioError::InvalidConfig("l must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(GioError::InvalidConfig("max_iter must be at least 1".into()));
        }
        self.stop.validate()?;
        match self.init.kind {
            InitKind::Subset => {
                if !(0.0..=1.0).contains(&self.init.subset_fraction) {
                    return Err(GioError::InvalidConfig(format!(
                        "subset fraction {} outside [0, 1]",
                        self.init.subset_fraction
                    )));
                }
            }
            InitKind::Uniform => self.init.uniform.validate()?,
            InitKind::File => {
                if self.init.file.is_none() {
                    return Err(GioError::InvalidConfig(
                        "init kind is file but no path given".into(),
                    ));
                }
            }
            InitKind::None => {}
        }
        if self.stop.kind == StopKind::MaxResets && !self.stop.resets_allowed {
            return Err(GioError::InvalidConfig(
                "stop criterion max_resets requires resets_allowed".into(),
            ));
        }
        Ok(())
    }
}
