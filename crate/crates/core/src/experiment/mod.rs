//! Config-driven pipeline: dataset generation, sampling, training,
//! evaluation, interpretation and inference, each writing its outputs and
//! the resolved configuration into an output directory.

mod commands;
mod presets;

pub use commands::{
    eval, generate, infer, interpret, sample, train, EvalReport, GenerateReport, InferReport, InterpretReport, SampleReport,
    TrainReport, CHECKPOINT_FILE, HISTORY_FILE, IC_FILE, MEASUREMENT_FILE, METRICS_FILE, PHYSICS_FILE, PREDICTION_FILE, REFERENCE_FILE,
    RESOLVED_CONFIG, TRAJECTORY_FILE,
};
pub use presets::{preset, PRESETS};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::model::ModelConfig;
use crate::solver::PdeSystem;
use crate::trainer::TrainConfig;

fn one() -> usize {
    1
}

/// Fine-grid layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extents: Vec<usize>,
    pub dx: f64,
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.extents.clone(), self.dx).map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Seed of the initial-condition stream.
    #[serde(default)]
    pub seed: u64,
    /// Initial condition read from a field file instead of the seeded generator.
    #[serde(default)]
    pub ic: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    /// Leading fine frames kept before subsampling; all when absent.
    #[serde(default)]
    pub frames: Option<usize>,
    pub space_stride: usize,
    pub time_stride: usize,
    /// Gaussian noise level relative to each channel's standard deviation.
    #[serde(default)]
    pub noise: f64,
    /// Seed of the noise stream.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Euler steps predicted past the measured window.
    #[serde(default)]
    pub extra_steps: usize,
}

/// One experiment. Each random stream has its own seed: `generate.seed`
/// (initial condition), `sample.seed` (noise) and `train.seed`
/// (parameter initialisation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub system: PdeSystem,
    pub grid: GridConfig,
    pub generate: GenerateConfig,
    pub sample: SampleConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.system.validate().map_err(|e| Error::Config(format!("system: {e}")))?;
        let grid = self.grid.spec()?;
        if grid.ndim() != self.system.ndim {
            return bad(format!("{}D grid for a {}D system", grid.ndim(), self.system.ndim));
        }
        let g = &self.generate;
        if !(g.dt.is_finite() && g.dt > 0.0) || g.record_every == 0 {
            return bad("generate.dt must be positive and generate.record_every at least 1".into());
        }
        let s = &self.sample;
        if s.space_stride == 0 || s.time_stride == 0 {
            return bad("sample strides must be at least 1".into());
        }
        if !(s.noise.is_finite() && s.noise >= 0.0) {
            return bad(format!("sample.noise must be >= 0, got {}", s.noise));
        }
        if s.frames == Some(0) {
            return bad("sample.frames must be at least 1".into());
        }
        self.model.validate(2, grid.ndim())?;
        self.train.validate()
    }

    /// Fine grid.
    pub fn fine_grid(&self) -> Result<GridSpec> {
        self.grid.spec()
    }
}
