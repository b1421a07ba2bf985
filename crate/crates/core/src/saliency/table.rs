use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SaliencyError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[serde(rename = "l1")]
    L1Norm,
    #[serde(rename = "apoz")]
    Apoz,
    #[serde(rename = "kmeans")]
    KMeansDist,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1Norm, Metric::Apoz, Metric::KMeansDist];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1Norm => "l1",
            Metric::Apoz => "apoz",
            Metric::KMeansDist => "kmeans",
        }
    }

    /// L1 prunes the smallest norms; APoZ and k-means prune the largest scores.
    pub fn prune_highest_first(self) -> bool {
        !matches!(self, Metric::L1Norm)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = SaliencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "l1norm" | "l1-norm" => Ok(Metric::L1Norm),
            "apoz" => Ok(Metric::Apoz),
            "kmeans" | "k-means" | "kmeansdist" => Ok(Metric::KMeansDist),
            _ => Err(SaliencyError::UnknownMetric(s.to_string())),
        }
    }
}

/// Per-filter scores of every target conv layer under one metric.
/// `per_layer[id][j]` is the score of filter `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyTable {
    pub metric: Metric,
    pub per_layer: BTreeMap<usize, Vec<f64>>,
}

impl SaliencyTable {
    pub fn new(metric: Metric) -> Self {
        SaliencyTable { metric, per_layer: BTreeMap::new() }
    }

    pub fn scores(&self, layer: usize) -> Option<&[f64]> {
        self.per_layer.get(&layer).map(Vec::as_slice)
    }

    pub fn check(&self) -> Result<(), SaliencyError> {
        for (&layer, scores) in &self.per_layer {
            if scores.is_empty() {
                return Err(SaliencyError::InvalidTable(format!("layer {layer} has no filters")));
            }
            for (j, &s) in scores.iter().enumerate() {
                if !s.is_finite() {
                    return Err(SaliencyError::InvalidTable(format!("layer {layer} filter {j}: score {s}")));
                }
                if self.metric == Metric::Apoz && !(0.0..=1.0).contains(&s) {
                    return Err(SaliencyError::InvalidTable(format!("layer {layer} filter {j}: APoZ {s} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Filter indices of `layer`, most prunable first; ties go to the lower index.
    pub fn prune_order(&self, layer: usize) -> Option<Vec<usize>> {
        let scores = self.scores(layer)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let high = self.metric.prune_highest_first();
        order.sort_by(|&a, &b| {
            let c = scores[a].total_cmp(&scores[b]);
            (if high { c.reverse() } else { c }).then(a.cmp(&b))
        });
        Some(order)
    }

    /// CSV with columns `layer,filter,metric,score,rank`; rank 1 is pruned first.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SaliencyError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer", "filter", "metric", "score", "rank"])?;
        for &layer in self.per_layer.keys() {
            let order = self.prune_order(layer).unwrap_or_default();
            let mut rank = vec![0; order.len()];
            for (r, &j) in order.iter().enumerate() {
                rank[j] = r + 1;
            }
            for (j, s) in self.per_layer[&layer].iter().enumerate() {
                w.write_record([layer.to_string(), j.to_string(), self.metric.name().to_string(), format!("{s:e}"), rank[j].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerHistogram {
    pub layer_id: usize,
    pub metric: Metric,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of each layer's scores over `[min, max]`.
pub fn saliency_histogram(table: &SaliencyTable, bins: usize) -> Result<Vec<LayerHistogram>, SaliencyError> {
    if bins == 0 {
        return Err(SaliencyError::InvalidArgument("histogram needs at least one bin".into()));
    }
    Ok(table
        .per_layer
        .iter()
        .map(|(&layer_id, scores)| {
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut counts = vec![0; bins];
            for &s in scores {
                let b = if hi > lo { ((s - lo) / (hi - lo) * bins as f64) as usize } else { 0 };
                counts[b.min(bins - 1)] += 1;
            }
            LayerHistogram { layer_id, metric: table.metric, lo, hi, counts }
        })
        .collect())
}
