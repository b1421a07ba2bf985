use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{default_k, kmeans_scores};
use super::{Metric, SaliencyError, SaliencyTable};
use crate::surgeon::PrunePlan;
use crate::tensorcore::{FeatureMap, FilterTensor, NetworkGraph, Real};

/// Activations with magnitude at or below this count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

/// Sum of absolute weights; the bias is not included.
pub fn l1_score<T: Real>(filter: &FilterTensor<T>) -> f64 {
    l1_of(&filter.weights)
}

fn l1_of<T: Real>(weights: &[T]) -> f64 {
    weights.iter().map(|w| w.as_f64().abs()).sum()
}

pub fn l1_table<T: Real>(model: &NetworkGraph<T>) -> SaliencyTable {
    let mut table = SaliencyTable::new(Metric::L1Norm);
    for id in model.conv_layer_ids() {
        let conv = model.conv(id).expect("conv id");
        table.per_layer.insert(id, (0..conv.num_filters()).map(|j| l1_of(conv.filter_weights(j))).collect());
    }
    table
}

/// Zero-activation counts of one filter over a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub layer_id: usize,
    pub filter_index: usize,
    /// Number of examples.
    pub batch_size: usize,
    /// Activation entries per filter per example.
    pub map_size: usize,
    pub zero_count: usize,
}

/// Streams `batch` through the model and counts post-ReLU zeros for every
/// conv filter. Every conv layer must be followed directly by a ReLU.
pub fn activation_stats<T: Real>(model: &NetworkGraph<T>, batch: &[FeatureMap<T>]) -> Result<Vec<ActivationStats>, SaliencyError> {
    if batch.is_empty() {
        return Err(SaliencyError::EmptyBatch);
    }
    let taps = model.relu_taps();
    let convs = model.conv_layer_ids();
    if let Some(&bare) = convs.iter().find(|id| !taps.iter().any(|(c, _)| c == *id)) {
        return Err(SaliencyError::InvalidArgument(format!("conv layer {bare} is not followed by a ReLU")));
    }
    let shapes = model.shapes()?;
    let zero = T::from_f64_lossy(ZERO_TOLERANCE);
    let empty = || taps.iter().map(|&(_, r)| vec![0usize; shapes[r].channels]).collect::<Vec<_>>();
    let counts = batch
        .par_iter()
        .try_fold(empty, |mut acc, input| {
            model.forward_observed(input, |i, out| {
                if let Some(t) = taps.iter().position(|&(_, r)| r == i) {
                    let plane = out.shape().plane();
                    for (c, chunk) in out.data().chunks(plane).enumerate() {
                        acc[t][c] += chunk.iter().filter(|a| a.abs() <= zero).count();
                    }
                }
            })?;
            Ok::<_, SaliencyError>(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
            Ok(a)
        })?;
    let mut stats = Vec::new();
    for (t, &(conv, relu)) in taps.iter().enumerate() {
        for (j, &zero_count) in counts[t].iter().enumerate() {
            stats.push(ActivationStats { layer_id: conv, filter_index: j, batch_size: batch.len(), map_size: shapes[relu].plane(), zero_count });
        }
    }
    Ok(stats)
}

/// APoZ per filter: `zero_count / (batch_size * map_size)`.
pub fn apoz_scores(stats: &[ActivationStats]) -> Result<SaliencyTable, SaliencyError> {
    let mut grouped: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for s in stats {
        if s.batch_size == 0 {
            return Err(SaliencyError::EmptyBatch);
        }
        let total = s.batch_size * s.map_size;
        if total == 0 || s.zero_count > total {
            return Err(SaliencyError::InvalidArgument(format!("layer {} filter {}: {} zeros out of {total}", s.layer_id, s.filter_index, s.zero_count)));
        }
        if grouped.entry(s.layer_id).or_default().insert(s.filter_index, s.zero_count as f64 / total as f64).is_some() {
            return Err(SaliencyError::InvalidArgument(format!("layer {} filter {} listed twice", s.layer_id, s.filter_index)));
        }
    }
    let mut table = SaliencyTable::new(Metric::Apoz);
    for (layer, filters) in grouped {
        if filters.keys().copied().ne(0..filters.len()) {
            return Err(SaliencyError::InvalidArgument(format!("layer {layer}: filter indices are not contiguous from 0")));
        }
        table.per_layer.insert(layer, filters.into_values().collect());
    }
    Ok(table)
}

pub fn apoz_table<T: Real>(model: &NetworkGraph<T>, batch: &[FeatureMap<T>]) -> Result<SaliencyTable, SaliencyError> {
    apoz_scores(&activation_stats(model, batch)?)
}

/// k-means outlier scores of flattened filters, per conv layer. `k = None`
/// uses [`default_k`] for each layer.
pub fn kmeans_table<T: Real>(model: &NetworkGraph<T>, k: Option<usize>, seed: u64) -> Result<SaliencyTable, SaliencyError> {
    let mut table = SaliencyTable::new(Metric::KMeansDist);
    for id in model.conv_layer_ids() {
        let conv = model.conv(id).expect("conv id");
        let points: Vec<Vec<f64>> = (0..conv.num_filters()).map(|j| conv.filter_weights(j).iter().map(|w| w.as_f64()).collect()).collect();
        let k = k.unwrap_or_else(|| default_k(points.len()));
        table.per_layer.insert(id, kmeans_scores(&points, k, seed ^ id as u64)?);
    }
    Ok(table)
}

/// Number of filters `floor(p / 100 * n)` to mark in an `n`-filter layer.
pub fn prune_count(p: f64, n: usize) -> Result<usize, SaliencyError> {
    if !(0.0..100.0).contains(&p) {
        return Err(SaliencyError::InvalidPercentage(p));
    }
    Ok((p / 100.0 * n as f64 + 1e-9).floor() as usize)
}

/// Marks `floor(p% * n)` filters per layer following the metric's order.
pub fn select_prunable(table: &SaliencyTable, p: f64) -> Result<PrunePlan, SaliencyError> {
    let counts = table.per_layer.iter().map(|(&l, s)| prune_count(p, s.len()).map(|c| (l, c))).collect::<Result<BTreeMap<_, _>, _>>()?;
    let mut plan = select_counts(table, &counts)?;
    plan.pruning_percentage = p;
    Ok(plan)
}

/// Marks the `counts[layer]` most prunable filters of each listed layer.
pub fn select_counts(table: &SaliencyTable, counts: &BTreeMap<usize, usize>) -> Result<PrunePlan, SaliencyError> {
    let mut plan = PrunePlan::default();
    for (&layer, &count) in counts {
        let order = table.prune_order(layer).ok_or(SaliencyError::UnknownLayer(layer))?;
        if count >= order.len() {
            return Err(SaliencyError::WouldEmpty { layer, filters: order.len(), requested: count });
        }
        for &j in &order[..count] {
            plan.insert(layer, j);
        }
    }
    Ok(plan)
}
