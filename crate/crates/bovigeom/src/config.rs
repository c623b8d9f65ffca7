//! Pipeline configuration (TOML). Unknown keys are rejected at every level.

use std::path::Path;

use bovigeom_core::evaluation::DEFAULT_RATIOS;
use bovigeom_core::pointcloud::AugmentParams;
use bovigeom_core::{CameraConfig, FeatureParams, ForestGrid, ForestHyperparams, RefinementConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub camera: Option<CameraConfig>,
    pub refinement: RefinementConfig,
    pub features: FeatureParams,
    pub forest: ForestConfig,
    pub evaluation: EvaluationConfig,
    pub cloud: CloudConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            camera: None,
            refinement: RefinementConfig::default(),
            features: FeatureParams::default(),
            forest: ForestConfig::default(),
            evaluation: EvaluationConfig::default(),
            cloud: CloudConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// The full 810-configuration grid.
    #[default]
    Table1,
    /// Only `[forest.single]`.
    Single,
    /// `[forest.custom]`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub grid: GridChoice,
    pub single: ForestHyperparams,
    pub custom: Option<ForestGrid>,
}

impl ForestConfig {
    pub fn resolve(&self, choice: Option<GridChoice>) -> Result<ForestGrid> {
        match choice.unwrap_or(self.grid) {
            GridChoice::Table1 => Ok(ForestGrid::table1()),
            GridChoice::Single => Ok(ForestGrid::single(&self.single)),
            GridChoice::Custom => self.custom.clone().ok_or_else(|| Error::config("grid = \"custom\" needs a [forest.custom] table")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub repeats: usize,
    pub seed: u64,
    /// Train / validation / test fractions of cows.
    pub ratios: [f64; 3],
    /// Share of cows held out for model selection by `train`.
    pub validation_fraction: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { repeats: 5, seed: 0, ratios: DEFAULT_RATIOS, validation_fraction: 0.15 / 0.85 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudConfig {
    pub voxel_mm: Option<f64>,
    pub points: Option<usize>,
    pub normalize: bool,
    pub augment: Option<AugmentParams>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version));
        }
        if let Some(cam) = &self.camera {
            cam.validate().map_err(Error::config)?;
        }
        let f = &self.features;
        if f.n_samples.is_some_and(|n| n < 2) {
            return bad("features.n_samples must be >= 2".into());
        }
        for (name, v) in [("r_query_mm", f.r_query_mm), ("grid_pitch_mm", f.grid_pitch_mm), ("cloud.voxel_mm", self.cloud.voxel_mm)] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.cloud.points == Some(0) {
            return bad("cloud.points must be positive".into());
        }
        self.forest.single.validate().map_err(Error::config)?;
        if let Some(g) = &self.forest.custom {
            if g.is_empty() {
                return bad("forest.custom grid is empty".into());
            }
            for hp in g.configs(0) {
                hp.validate().map_err(Error::config)?;
            }
        }
        let e = &self.evaluation;
        if e.repeats == 0 {
            return bad("evaluation.repeats must be >= 1".into());
        }
        if e.ratios.iter().any(|r| !(*r >= 0.0)) || (e.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("evaluation.ratios must be non-negative and sum to 1".into());
        }
        if !(e.validation_fraction > 0.0 && e.validation_fraction < 1.0) {
            return bad("evaluation.validation_fraction must be in (0, 1)".into());
        }
        Ok(())
    }
}

/// Reads a bare `CameraConfig` TOML file.
pub fn load_camera(path: &Path) -> Result<CameraConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let cam: CameraConfig = toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    cam.validate().map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok(cam)
}
