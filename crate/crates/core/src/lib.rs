//! Data selection by divergence minimization.
//!
//! Given a candidate vector set `G`, a target vector set `X`, and optionally
//! an existing set `D`, select the subset of `G` that minimizes the
//! kNN-estimated KL divergence of the selection from `X`. The selection
//! loop quantizes both sides with k-means, gradient-descends the divergence
//! with respect to a virtual point, snaps that point to the nearest real
//! candidate centroid, and repeats under a configurable stopping criterion;
//! chosen centroids are then exploded back to the full rows they represent.

pub mod baselines;
pub mod checks;
pub mod config;
pub mod dataset;
pub mod error;
pub mod kl;
pub mod optimizer;
pub mod pipeline;
pub mod quantizer;
pub mod report;
pub mod rng;
pub mod selector;

pub use config::{GioConfig, InitKind, InitSpec};
pub use dataset::{load_dataset, normalize_rows, random_subset, save_dataset, DataFormat, VectorDataset};
pub use error::{GioError, Result};
pub use kl::{kl_averaged, kl_gradient, kl_single_k, KnnDistances};
pub use optimizer::{descend, init_v, DescentConfig, ScaleMode, VInitMode};
pub use quantizer::{explode, kmeans, ClusterModel};
pub use report::{PhaseTimings, SelectionReport};
pub use rng::SeededRng;
pub use selector::{
    nearest_candidate, run_gio, should_stop, SelectionInit, SelectionState, StopDecision,
    StopKind, StopReason, StoppingCriterion, UniformStartConfig,
};
