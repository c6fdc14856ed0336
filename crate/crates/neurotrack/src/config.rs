//! Run configuration (`run.json`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neurotrack_core::ann::{MlpNetwork, TrainConfig};
use neurotrack_core::pipeline::PipelineConfig;
use neurotrack_core::scene::{validate_scene, DiskScene};
use neurotrack_core::tracker::Backend;

use crate::error::AppError;
use crate::formats::{load_json, parse_json};

/// A scene given inline or as a path to a scene JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Path(PathBuf),
    Inline(DiskScene),
}

impl Default for SceneRef {
    fn default() -> Self {
        SceneRef::Inline(DiskScene::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Dense,
    Spiking,
    Both,
}

impl BackendChoice {
    pub fn backends(self) -> Vec<Backend> {
        match self {
            BackendChoice::Dense => vec![Backend::Dense],
            BackendChoice::Spiking => vec![Backend::Spiking],
            BackendChoice::Both => vec![Backend::Dense, Backend::Spiking],
        }
    }
}

impl std::str::FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dense" => Ok(BackendChoice::Dense),
            "spiking" => Ok(BackendChoice::Spiking),
            "both" => Ok(BackendChoice::Both),
            _ => Err(format!("unknown backend {s:?} (dense, spiking or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorConfig {
    pub enabled: bool,
    /// Trained network to load; when absent one is trained on the scene.
    pub model: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self { enabled: true, model: None, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DumpConfig {
    pub events: bool,
    pub detections: bool,
    pub spikes: bool,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self { events: false, detections: true, spikes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scene: SceneRef,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub backend: BackendChoice,
    /// Base seed for every random stream of a run.
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Centre the disk model on the scene's rotation center.
    #[serde(default = "yes")]
    pub disk_center_from_scene: bool,
    #[serde(default)]
    pub validator: ValidatorConfig,
    #[serde(default)]
    pub dump: DumpConfig,
    /// Half-open frame window of the spiking-vs-dense comparison.
    #[serde(default = "default_comparison_window")]
    pub comparison_window: [usize; 2],
}

fn yes() -> bool {
    true
}

fn default_comparison_window() -> [usize; 2] {
    [50, 200]
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            scene: SceneRef::default(),
            pipeline: PipelineConfig::default(),
            backend: BackendChoice::default(),
            seed,
            output: None,
            disk_center_from_scene: true,
            validator: ValidatorConfig::default(),
            dump: DumpConfig::default(),
            comparison_window: default_comparison_window(),
        }
    }
}

/// A configuration with its scene and model resolved and checked.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub scene: DiskScene,
    /// Pipeline settings with the seed and scene center applied.
    pub pipeline: PipelineConfig,
    pub model: Option<MlpNetwork>,
}

fn config_error(e: impl std::fmt::Display) -> AppError {
    AppError::Config(e.to_string())
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_scene(path: &Path) -> Result<DiskScene, AppError> {
    let scene: DiskScene = load_json(path).map_err(config_error)?;
    validate_scene(&scene).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        parse_json(&text).map_err(|e| config_error(e.at_path(path)))
    }

    /// Resolves relative paths against `base`, applies the seed and checks
    /// every sub-configuration.
    pub fn resolve(self, base: &Path) -> Result<ResolvedRun, AppError> {
        let scene = match &self.scene {
            SceneRef::Path(p) => load_scene(&resolve_path(base, p))?,
            SceneRef::Inline(s) => validate_scene(s).map_err(config_error)?,
        };
        let mut pipeline = self.pipeline.clone();
        pipeline.tracker.seed = self.seed;
        pipeline.dvs.seed = self.seed;
        if self.disk_center_from_scene {
            pipeline.tracker.disk.center = scene.center;
        }
        pipeline.tracker.record_spikes |= self.dump.spikes;
        pipeline.tracker.disk.validate().map_err(config_error)?;
        pipeline.tracker.constant_velocity.validate().map_err(config_error)?;
        if pipeline.tracker.neural.neurons == 0 {
            return Err(AppError::Config(String::from("tracker.neural.neurons must be positive")));
        }
        let [a, b] = self.comparison_window;
        if a > b {
            return Err(AppError::Config(format!("comparison_window [{a}, {b}] is reversed")));
        }
        let model = match (&self.validator.enabled, &self.validator.model) {
            (true, Some(p)) => {
                let net: MlpNetwork = load_json(&resolve_path(base, p)).map_err(config_error)?;
                net.check().map_err(config_error)?;
                Some(net)
            }
            _ => None,
        };
        Ok(ResolvedRun { config: self, scene, pipeline, model })
    }
}
