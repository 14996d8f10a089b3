use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clustering::{DEFAULT_NEIGHBOR_K, DEFAULT_RESTARTS};
use crate::coherence::DEFAULT_EPSILON;
use crate::error::{Error, Result};
use crate::market_data::{DateRange, PanelLayout, WindowSpec};
use crate::oscillator_sim::SimParams;

/// Every knob of a pipeline run. Serialized as TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Price file read by the ingest stage.
    pub input: Option<PathBuf>,
    pub layout: PanelLayout,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub width: usize,
    pub step: usize,
    pub omega: f64,
    pub alpha: f64,
    pub dt: f64,
    pub transient_steps: usize,
    pub measure_steps: usize,
    /// Master seed; per-window seeds and the k-means seed derive from it.
    pub seed: u64,
    pub epsilon: f64,
    pub neighbor_k: usize,
    pub clusters: usize,
    pub restarts: usize,
    /// First window position fed to the clustering stage.
    pub window_start: Option<usize>,
    /// One past the last window position fed to the clustering stage.
    pub window_end: Option<usize>,
    /// Optional `ticker,sector[,classification]` map for the report.
    pub sectors: Option<PathBuf>,
    pub histogram_bins: usize,
    pub output_dir: PathBuf,
    /// Worker threads for the simulate stage; 0 uses every core, 1 runs serially.
    pub threads: usize,
    /// Also write per-window correlation and coupling matrices.
    pub dump_matrices: bool,
    /// Reuse per-window summaries already on disk.
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sim = SimParams::default();
        let windows = WindowSpec::default();
        Self {
            input: None,
            layout: PanelLayout::Auto,
            start_date: None,
            end_date: None,
            width: windows.width(),
            step: windows.step(),
            omega: sim.omega,
            alpha: sim.alpha,
            dt: sim.dt,
            transient_steps: sim.transient_steps,
            measure_steps: sim.measure_steps,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            neighbor_k: DEFAULT_NEIGHBOR_K,
            clusters: 3,
            restarts: DEFAULT_RESTARTS,
            window_start: None,
            window_end: None,
            sectors: None,
            histogram_bins: 20,
            output_dir: PathBuf::from("out"),
            threads: 1,
            dump_matrices: false,
            resume: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(reason) => Error::Config(format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.width < 2 {
            return bad(format!("width must be at least 2, got {}", self.width));
        }
        if self.step < 1 {
            return bad("step must be at least 1".into());
        }
        self.sim_params().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.neighbor_k < 1 {
            return bad("neighbor_k must be at least 1".into());
        }
        if self.clusters != 3 {
            return bad(format!(
                "clusters must be 3 (low, middle, high), got {}",
                self.clusters
            ));
        }
        if self.restarts < 1 {
            return bad("restarts must be at least 1".into());
        }
        if self.histogram_bins < 1 {
            return bad("histogram_bins must be at least 1".into());
        }
        if let (Some(s), Some(e)) = (self.window_start, self.window_end) {
            if s >= e {
                return bad(format!("window range {s}..{e} is empty"));
            }
        }
        if let (Some(s), Some(e)) = (self.start_date, self.end_date) {
            if s > e {
                return bad(format!("start_date {s} is after end_date {e}"));
            }
        }
        Ok(())
    }

    /// Simulation parameters for window `index` (the seed is derived per window).
    pub fn sim_params(&self) -> SimParams {
        SimParams {
            omega: self.omega,
            alpha: self.alpha,
            dt: self.dt,
            transient_steps: self.transient_steps,
            measure_steps: self.measure_steps,
            seed: self.seed,
        }
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.width, self.step).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn date_range(&self) -> DateRange {
        DateRange {
            start: self.start_date,
            end: self.end_date,
        }
    }
}
