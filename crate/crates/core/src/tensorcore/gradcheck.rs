use super::train::loss_and_gradients;
use super::{FeatureMap, Layer, NetworkGraph, Real, TensorError};

/// Largest finite-difference disagreement found in one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradCheck {
    pub layer_id: usize,
    pub kind: &'static str,
    pub checked: usize,
    pub max_relative_error: f64,
}

const WEIGHTS_PER_LAYER: usize = 32;
const BIASES_PER_LAYER: usize = 8;

/// Compare analytic gradients against central differences on an evenly strided
/// subset of every layer's weights and biases. Runs in `f64` regardless of `T`.
pub fn gradient_check_by_layer<T: Real>(
    model: &NetworkGraph<T>,
    input: &FeatureMap<T>,
    label: usize,
    epsilon: f64,
) -> Result<Vec<LayerGradCheck>, TensorError> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(TensorError::InvalidConfig(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    let mut probe: NetworkGraph<f64> = model.cast();
    let x: FeatureMap<f64> = input.cast();
    let (_, analytic) = loss_and_gradients(&probe, &x, label)?;

    let mut report = Vec::new();
    for id in 0..probe.layers().len() {
        let Some(grad) = analytic.layers[id].clone() else { continue };
        let kind = probe.layers()[id].name();
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (is_bias, len, cap) in [(false, grad.weights.len(), WEIGHTS_PER_LAYER), (true, grad.bias.len(), BIASES_PER_LAYER)] {
            for idx in sample_indices(len, cap) {
                let a = if is_bias { grad.bias[idx] } else { grad.weights[idx] };
                let plus = perturbed_loss(&mut probe, &x, label, id, is_bias, idx, epsilon)?;
                let minus = perturbed_loss(&mut probe, &x, label, id, is_bias, idx, -epsilon)?;
                let numeric = (plus - minus) / (2.0 * epsilon);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        report.push(LayerGradCheck { layer_id: id, kind, checked, max_relative_error: worst });
    }
    Ok(report)
}

/// Maximum relative error over every sampled parameter of the model.
pub fn gradient_check<T: Real>(model: &NetworkGraph<T>, input: &FeatureMap<T>, label: usize, epsilon: f64) -> Result<f64, TensorError> {
    Ok(gradient_check_by_layer(model, input, label, epsilon)?
        .iter()
        .map(|r| r.max_relative_error)
        .fold(0.0, f64::max))
}

fn sample_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    (0..cap).map(|i| i * len / cap).collect()
}

fn perturbed_loss(
    model: &mut NetworkGraph<f64>,
    x: &FeatureMap<f64>,
    label: usize,
    id: usize,
    is_bias: bool,
    idx: usize,
    delta: f64,
) -> Result<f64, TensorError> {
    let slot = param_slot(model, id, is_bias, idx);
    let saved = *slot;
    *slot = saved + delta;
    let probs = model.forward(x);
    *param_slot(model, id, is_bias, idx) = saved;
    let probs = probs?;
    Ok(super::train::cross_entropy(probs[label]))
}

fn param_slot(model: &mut NetworkGraph<f64>, id: usize, is_bias: bool, idx: usize) -> &mut f64 {
    let (weights, bias) = match &mut model.layers_mut()[id] {
        Layer::Conv(c) => (&mut c.weights, &mut c.bias),
        Layer::Dense(d) => (&mut d.weights, &mut d.bias),
        _ => unreachable!("only parameterized layers are probed"),
    };
    if is_bias {
        &mut bias[idx]
    } else {
        &mut weights[idx]
    }
}
