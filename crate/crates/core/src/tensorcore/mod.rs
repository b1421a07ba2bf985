//! Dense CPU CNN engine: forward pass, reverse-mode gradients and SGD for
//! conv / ReLU / max-pool / flatten / dense / softmax stacks.

mod arch;
mod gradcheck;
mod graph;
pub mod io;
mod layers;
mod ops;
mod tensor;
mod train;

pub use arch::{build, LayerSpec, Preset};
pub use gradcheck::{gradient_check, gradient_check_by_layer, LayerGradCheck};
pub use graph::{Example, LayerActivations, NetworkGraph};
pub use layers::{ConvLayer, DenseLayer, Layer, Padding};
pub use ops::{conv_forward, conv_forward_direct};
pub use tensor::{FeatureMap, FilterTensor, Real, Shape};
pub use train::{loss_and_gradients, mean_loss, train, Gradients, ParamGrad, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected {expected} values, got {actual}")]
    DataLength { expected: usize, actual: usize },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("conv layer has no filters")]
    EmptyLayer,
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged in epoch {epoch}: loss or weights became non-finite")]
    Divergence { epoch: usize },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
