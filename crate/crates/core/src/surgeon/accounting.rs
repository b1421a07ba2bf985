use serde::{Deserialize, Serialize};

use super::SurgeonError;
use crate::tensorcore::{ConvLayer, Layer, NetworkGraph, Real, Shape};

/// Multiply-accumulates of one conv layer on `input`:
/// `filters · H_out · W_out · kh · kw · depth`.
pub fn conv_layer_flops<T: Real>(conv: &ConvLayer<T>, input: Shape) -> Result<u64, SurgeonError> {
    if conv.num_filters() == 0 {
        return Err(SurgeonError::EmptyLayer);
    }
    let out = conv.output_shape(input)?;
    let (kh, kw) = conv.kernel();
    Ok((out.channels * out.height * out.width * kh * kw * conv.depth()) as u64)
}

/// Weights plus biases; zero for layers without parameters.
pub fn layer_param_count<T: Real>(layer: &Layer<T>) -> u64 {
    match layer {
        Layer::Conv(c) => {
            let (kh, kw) = c.kernel();
            (c.num_filters() * c.depth() * kh * kw + c.num_filters()) as u64
        }
        Layer::Dense(d) => (d.inputs() * d.outputs() + d.outputs()) as u64,
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer_id: usize,
    pub kind: String,
    pub flops: u64,
    pub params: u64,
}

/// FLOPs and parameters of every weighted layer. Dense layers count
/// `inputs · outputs` multiply-accumulates.
pub fn layer_costs<T: Real>(model: &NetworkGraph<T>) -> Result<Vec<LayerCost>, SurgeonError> {
    let mut costs = Vec::new();
    for (id, layer) in model.layers().iter().enumerate() {
        let flops = match layer {
            Layer::Conv(c) => conv_layer_flops(c, model.input_shape_of(id)?)?,
            Layer::Dense(d) => (d.inputs() * d.outputs()) as u64,
            _ => continue,
        };
        costs.push(LayerCost { layer_id: id, kind: layer.name().to_string(), flops, params: layer_param_count(layer) });
    }
    Ok(costs)
}

pub fn model_flops<T: Real>(model: &NetworkGraph<T>) -> Result<u64, SurgeonError> {
    Ok(layer_costs(model)?.iter().map(|c| c.flops).sum())
}

pub fn model_params<T: Real>(model: &NetworkGraph<T>) -> u64 {
    model.layers().iter().map(layer_param_count).sum()
}
