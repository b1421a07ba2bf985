use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SurgeonError;
use crate::tensorcore::{NetworkGraph, Real};

/// Filters to delete, keyed by conv layer id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub per_layer: BTreeMap<usize, BTreeSet<usize>>,
    /// Per-layer pruning percentage the plan was derived from.
    pub pruning_percentage: f64,
    /// Filters removed per layer in one iterative step.
    pub step_size: Option<usize>,
    /// Upper bound on `step_size` for layer-sequential schedules.
    pub step_cap: Option<usize>,
}

impl PrunePlan {
    pub fn new(pruning_percentage: f64) -> Self {
        PrunePlan { pruning_percentage, ..Self::default() }
    }

    pub fn insert(&mut self, layer: usize, filter: usize) -> bool {
        self.per_layer.entry(layer).or_default().insert(filter)
    }

    pub fn removed(&self, layer: usize) -> usize {
        self.per_layer.get(&layer).map_or(0, BTreeSet::len)
    }

    pub fn total(&self) -> usize {
        self.per_layer.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Every layer id names a conv layer, every index is in range, and
    /// each layer keeps at least one filter.
    pub fn validate<T: Real>(&self, model: &NetworkGraph<T>) -> Result<(), SurgeonError> {
        for (&layer, filters) in &self.per_layer {
            let conv = model.conv(layer).ok_or(SurgeonError::NotConv(layer))?;
            let n = conv.num_filters();
            if let Some(&bad) = filters.iter().find(|&&f| f >= n) {
                return Err(SurgeonError::FilterOutOfRange { layer, filter: bad, filters: n });
            }
            if filters.len() >= n {
                return Err(SurgeonError::WouldEmpty { layer, filters: n, requested: filters.len() });
            }
        }
        Ok(())
    }

    /// `other`, whose indices refer to the model *after* `self` was applied,
    /// rewritten in terms of the original indices and merged with `self`.
    pub fn compose<T: Real>(&self, other: &PrunePlan, original: &NetworkGraph<T>) -> Result<PrunePlan, SurgeonError> {
        let mut merged = self.clone();
        for (&layer, later) in &other.per_layer {
            let conv = original.conv(layer).ok_or(SurgeonError::NotConv(layer))?;
            let gone = self.per_layer.get(&layer);
            let survivors: Vec<usize> = (0..conv.num_filters()).filter(|f| gone.is_none_or(|g| !g.contains(f))).collect();
            for &f in later {
                let orig = *survivors.get(f).ok_or(SurgeonError::FilterOutOfRange { layer, filter: f, filters: survivors.len() })?;
                merged.insert(layer, orig);
            }
        }
        merged.step_size = other.step_size.or(self.step_size);
        merged.step_cap = other.step_cap.or(self.step_cap);
        Ok(merged)
    }
}
