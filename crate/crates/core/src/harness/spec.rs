use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::radarsynth::{DatasetConfig, TF_SHAPE};
use crate::saliency::Metric;
use crate::schedules::{ScheduleConfig, Strategy};
use crate::tensorcore::{build, LayerSpec, NetworkGraph, Preset, TrainConfig};

/// Named preset or an explicit layer list; `layers` wins when both are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub preset: Preset,
    pub layers: Option<Vec<LayerSpec>>,
    /// Weight initialisation seed.
    pub seed: u64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig { preset: Preset::DeskVgg, layers: None, seed: 0 }
    }
}

impl ArchitectureConfig {
    pub fn specs(&self, classes: usize) -> Vec<LayerSpec> {
        self.layers.clone().unwrap_or_else(|| self.preset.layers(classes))
    }

    pub fn build(&self, classes: usize) -> Result<NetworkGraph, HarnessError> {
        Ok(build(TF_SHAPE, &self.specs(classes), self.seed)?)
    }
}

/// Everything one experiment needs; loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    /// Baseline training.
    pub train: TrainConfig,
    /// Retraining and saliency settings shared by every cell; `strategy`,
    /// `metric` and `target_pct` are overwritten per cell.
    pub schedule: ScheduleConfig,
    pub metrics: Vec<Metric>,
    pub strategies: Vec<Strategy>,
    pub p_values: Vec<f64>,
    /// Matrix cells run concurrently.
    pub workers: usize,
    /// Also dump every TF map as a graymap image.
    pub pgm: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetConfig::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            schedule: ScheduleConfig::default(),
            metrics: Metric::ALL.to_vec(),
            strategies: vec![Strategy::IterativeMultiLayer, Strategy::OneShot],
            p_values: vec![5.0, 15.0, 30.0, 50.0, 70.0, 95.0],
            workers: 1,
            pgm: false,
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let spec: ExperimentSpec = toml::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.metrics.is_empty() || self.strategies.is_empty() || self.p_values.is_empty() {
            return bad("metrics, strategies and p_values must be non-empty");
        }
        if self.p_values.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
            return bad("p_values must lie in (0, 100)");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        self.train.validate()?;
        self.schedule.validate()?;
        self.architecture.build(self.classes())?;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.dataset.class_specs.len()
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn baseline_model_path(&self) -> PathBuf {
        self.output_dir.join("baseline.fpnet")
    }

    pub fn baseline_record_path(&self) -> PathBuf {
        self.output_dir.join("baseline.json")
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.csv")
    }

    pub fn baseline_row_path(&self) -> PathBuf {
        self.output_dir.join("baseline.csv")
    }

    pub fn plot_data_path(&self) -> PathBuf {
        self.output_dir.join("plot_data.json")
    }

    pub fn matrix_path(&self) -> PathBuf {
        self.output_dir.join("matrix.json")
    }

    pub fn cell_dir(&self) -> PathBuf {
        self.output_dir.join("cells")
    }

    pub fn saliency_dir(&self) -> PathBuf {
        self.output_dir.join("saliency")
    }
}
