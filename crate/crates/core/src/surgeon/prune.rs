use super::{PrunePlan, SurgeonError};
use crate::tensorcore::{DenseLayer, Layer, NetworkGraph, Real};

/// Copy of `model` with the planned filters deleted and the matching input
/// channels removed from the next weighted layer.
pub fn apply_prune<T: Real>(model: &NetworkGraph<T>, plan: &PrunePlan) -> Result<NetworkGraph<T>, SurgeonError> {
    plan.validate(model)?;
    let shapes = model.shapes()?;
    let mut layers = model.layers().to_vec();
    for (&id, gone) in &plan.per_layer {
        if gone.is_empty() {
            continue;
        }
        let conv = match &mut layers[id] {
            Layer::Conv(c) => c,
            _ => unreachable!("validated"),
        };
        let keep: Vec<usize> = (0..conv.num_filters).filter(|j| !gone.contains(j)).collect();
        let len = conv.filter_len();
        conv.weights = keep.iter().flat_map(|&j| conv.weights[j * len..(j + 1) * len].iter().copied()).collect();
        conv.bias = keep.iter().map(|&j| conv.bias[j]).collect();
        conv.num_filters = keep.len();

        // Walk through shape-preserving layers to the consumer of these channels.
        let mut plane = shapes[id].plane();
        let mut consumer = None;
        for next in id + 1..layers.len() {
            match &layers[next] {
                Layer::Relu => {}
                Layer::MaxPool { .. } => plane = shapes[next].plane(),
                Layer::Flatten => {}
                Layer::Conv(_) | Layer::Dense(_) => {
                    consumer = Some(next);
                    break;
                }
                Layer::Softmax => break,
            }
        }
        let next = consumer.ok_or(SurgeonError::NoConsumer(id))?;
        match &mut layers[next] {
            Layer::Conv(c) => {
                let slice = c.kernel_h * c.kernel_w;
                let old_len = c.filter_len();
                c.weights = (0..c.num_filters)
                    .flat_map(|f| {
                        let filter = &c.weights[f * old_len..(f + 1) * old_len];
                        keep.iter().flat_map(move |&d| filter[d * slice..(d + 1) * slice].iter().copied())
                    })
                    .collect();
                c.depth = keep.len();
            }
            Layer::Dense(d) => {
                let rows: Vec<usize> = keep.iter().flat_map(|&c| c * plane..(c + 1) * plane).collect();
                let weights = rows.iter().flat_map(|&r| d.weights[r * d.outputs..(r + 1) * d.outputs].iter().copied()).collect();
                *d = DenseLayer::new(rows.len(), d.outputs, weights, d.bias.clone())?;
            }
            _ => unreachable!(),
        }
    }
    Ok(NetworkGraph::new(model.input_shape(), layers)?)
}
