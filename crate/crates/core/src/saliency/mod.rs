//! Filter saliency under three criteria: weight L1 norm, average percentage
//! of zero activations (APoZ), and distance to a k-means centroid.

mod kmeans;
mod scores;
mod table;

pub use kmeans::{default_k, kmeans, kmeans_scores, KMeans, MAX_ITERATIONS, TOLERANCE};
pub use scores::{
    activation_stats, apoz_scores, apoz_table, kmeans_table, l1_score, l1_table, prune_count, select_counts, select_prunable, ActivationStats,
    ZERO_TOLERANCE,
};
pub use table::{saliency_histogram, LayerHistogram, Metric, SaliencyTable};

use crate::tensorcore::{FeatureMap, NetworkGraph, Real, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum SaliencyError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("k = {k} is invalid for {n} filters")]
    InvalidK { k: usize, n: usize },
    #[error("pruning percentage {0} is outside [0, 100)")]
    InvalidPercentage(f64),
    #[error("layer {layer} has {filters} filters; removing {requested} would leave none")]
    WouldEmpty { layer: usize, filters: usize, requested: usize },
    #[error("layer {0} is not in the saliency table")]
    UnknownLayer(usize),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("invalid saliency table: {0}")]
    InvalidTable(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    /// Cluster count for k-means; `None` picks [`default_k`] per layer.
    pub k: Option<usize>,
    pub seed: u64,
}

/// Scores every conv layer of `model`. `batch` is only read for APoZ.
pub fn score<T: Real>(metric: Metric, model: &NetworkGraph<T>, batch: &[FeatureMap<T>], cfg: &SaliencyConfig) -> Result<SaliencyTable, SaliencyError> {
    let table = match metric {
        Metric::L1Norm => l1_table(model),
        Metric::Apoz => apoz_table(model, batch)?,
        Metric::KMeansDist => kmeans_table(model, cfg.k, cfg.seed)?,
    };
    table.check()?;
    Ok(table)
}
