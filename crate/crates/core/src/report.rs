//! Selection reports: what was chosen, how the divergence moved, why the
//! run stopped, and enough configuration echo to reproduce it.

use serde::{Deserialize, Serialize};

use crate::config::GioConfig;
use crate::selector::StopReason;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub quantize_secs: f64,
    pub select_secs: f64,
    pub explode_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Candidate-centroid indices to explode: any initialization subset
    /// first, then acquisitions in order. Duplicates possible after a reset.
    pub selected: Vec<usize>,
    /// Acquisitions only, in acquisition order.
    pub acquired: Vec<usize>,
    /// Divergence after each accepted acquisition.
    pub kl_history: Vec<f64>,
    pub termination: StopReason,
    /// Outer-loop iterations executed.
    pub iterations: usize,
    pub resets_used: usize,
    /// Source rows emitted by the explosion, once it has run.
    pub selected_rows: Option<usize>,
    pub timings: PhaseTimings,
    pub config: GioConfig,
    pub tool_version: String,
}

impl SelectionReport {
    pub fn new(config: GioConfig) -> Self {
        Self {
            selected: Vec::new(),
            acquired: Vec::new(),
            kl_history: Vec::new(),
            termination: StopReason::MaxIterations,
            iterations: 0,
            resets_used: 0,
            selected_rows: None,
            timings: PhaseTimings::default(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
