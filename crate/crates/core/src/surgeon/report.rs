use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{model_flops, model_params, SurgeonError};
use crate::tensorcore::{NetworkGraph, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub flops_base: u64,
    pub flops_pruned: u64,
    pub params_base: u64,
    pub params_pruned: u64,
    /// `100 · (1 − params_pruned / params_base)`.
    pub compression_pct: f64,
    /// `flops_base / flops_pruned`.
    pub speedup: f64,
    pub top1_accuracy: f64,
    pub layer_pruning_pct: f64,
}

pub fn compression_report<T: Real>(
    base: &NetworkGraph<T>,
    pruned: &NetworkGraph<T>,
    top1_accuracy: f64,
    layer_pruning_pct: f64,
) -> Result<CompressionReport, SurgeonError> {
    let (flops_base, flops_pruned) = (model_flops(base)?, model_flops(pruned)?);
    let (params_base, params_pruned) = (model_params(base), model_params(pruned));
    Ok(report_from_counts(flops_base, flops_pruned, params_base, params_pruned, top1_accuracy, layer_pruning_pct))
}

pub fn report_from_counts(
    flops_base: u64,
    flops_pruned: u64,
    params_base: u64,
    params_pruned: u64,
    top1_accuracy: f64,
    layer_pruning_pct: f64,
) -> CompressionReport {
    CompressionReport {
        flops_base,
        flops_pruned,
        params_base,
        params_pruned,
        compression_pct: 100.0 * (1.0 - params_pruned as f64 / params_base as f64),
        speedup: flops_base as f64 / flops_pruned as f64,
        top1_accuracy,
        layer_pruning_pct,
    }
}

/// One results-table line, columns in publication order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub layer_pruning_pct: f64,
    pub model_compression_pct: f64,
    pub flops: u64,
    pub trainable_params: u64,
    pub speedup: f64,
    pub top1_acc: f64,
}

impl CompressionReport {
    pub fn row(&self, approach: &str) -> ReportRow {
        ReportRow {
            approach: approach.to_string(),
            layer_pruning_pct: self.layer_pruning_pct,
            model_compression_pct: self.compression_pct,
            flops: self.flops_pruned,
            trainable_params: self.params_pruned,
            speedup: self.speedup,
            top1_acc: self.top1_accuracy,
        }
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[ReportRow]) -> Result<(), SurgeonError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>, SurgeonError> {
    csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>().map_err(Into::into)
}
