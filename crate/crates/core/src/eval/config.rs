//! Run configuration, read from TOML.
//!
//! Every section is optional except `trajectory`; omitted keys take the
//! defaults of the corresponding library type. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TargetSpec;
use crate::pipeline::{PipelineConfig, TrackMode};
use crate::range_image::RangeImageConfig;
use crate::scan_sim::{SensorConfig, TrajectorySpec};

/// Output files written by `experiment`; relative paths resolve against the
/// output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub scans: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// `{mode}` is replaced by the mode name.
    pub trajectory: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Seconds; the trajectory duration when absent.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub sensor: SensorConfig,
    pub trajectory: TrajectorySpec,
    #[serde(default = "default_target")]
    pub target: TargetSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_modes")]
    pub modes: Vec<TrackMode>,
    /// Known initial position; the true position at t = 0 when absent.
    #[serde(default)]
    pub init: Option<[f64; 3]>,
    /// Position error, meters, beyond which a run counts as diverged.
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    #[serde(default)]
    pub range_image: RangeImageConfig,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_name() -> String {
    "unnamed".into()
}

fn default_target() -> TargetSpec {
    TargetSpec::cube(0.4)
}

fn default_modes() -> Vec<TrackMode> {
    vec![TrackMode::Dual]
}

fn default_divergence() -> f64 {
    5.0
}

impl RunConfig {
    /// Parses and validates; parse errors carry line and column.
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.target.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.pipeline.validate()?;
        self.trajectory.validate(self.sensor.max_range).map_err(|e| Error::Config(e.to_string()))?;
        self.range_image.validate()?;
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("duration must be positive, got {d}")));
            }
        }
        if let Some(p) = self.init {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Config("init must be finite".into()));
            }
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.trajectory.duration())
    }
}
