use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScheduleError, Strategy};
use crate::saliency::Metric;
use crate::surgeon::PrunePlan;

/// One prune-retrain step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    /// Filter indices refer to the model as it was before this step.
    pub plan: PrunePlan,
    pub delta: usize,
    /// Fingerprint of the model the saliency table was computed from.
    pub saliency_source: String,
    /// Fingerprint after pruning and retraining.
    pub model_after: String,
    pub retrain_epochs: usize,
    pub filters: BTreeMap<usize, usize>,
    pub params: u64,
    pub flops: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub strategy: Strategy,
    pub metric: Metric,
    pub target_pct: f64,
    /// Filters to remove per conv layer, from the floor rule on the baseline.
    pub targets: BTreeMap<usize, usize>,
    pub baseline: String,
    pub baseline_params: u64,
    pub baseline_flops: u64,
    pub baseline_accuracy: f64,
    pub steps: Vec<TraceStep>,
}

impl ScheduleTrace {
    pub fn prune_events(&self) -> usize {
        self.steps.iter().filter(|s| !s.plan.is_empty()).count()
    }

    pub fn retrain_events(&self) -> usize {
        self.steps.iter().filter(|s| s.retrain_epochs > 0).count()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.steps.last().map_or(self.baseline_accuracy, |s| s.accuracy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScheduleError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScheduleError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
