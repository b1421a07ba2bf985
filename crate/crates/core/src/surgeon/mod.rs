//! Structural filter removal and FLOP / parameter accounting.

mod accounting;
mod plan;
mod prune;
mod report;

pub use accounting::{conv_layer_flops, layer_costs, layer_param_count, model_flops, model_params, LayerCost};
pub use plan::PrunePlan;
pub use prune::apply_prune;
pub use report::{compression_report, read_rows, report_from_counts, write_rows, CompressionReport, ReportRow};

use crate::tensorcore::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum SurgeonError {
    #[error("layer {0} is not a conv layer")]
    NotConv(usize),
    #[error("layer {layer}: filter {filter} out of range for {filters} filters")]
    FilterOutOfRange { layer: usize, filter: usize, filters: usize },
    #[error("layer {layer} has {filters} filters; removing {requested} would leave none")]
    WouldEmpty { layer: usize, filters: usize, requested: usize },
    #[error("no weighted layer consumes the output of layer {0}")]
    NoConsumer(usize),
    #[error("conv layer has no filters")]
    EmptyLayer,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
