use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops;
use super::{Example, FeatureMap, Layer, NetworkGraph, Real, Shape, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 16, learning_rate: 0.05, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.epochs == 0 {
            return Err(TensorError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TensorError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TensorError::InvalidConfig(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Weight and bias gradients of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T = f32> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients aligned with [`NetworkGraph::layers`]; `None` for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<Option<ParamGrad<T>>>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(model: &NetworkGraph<T>) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Some(ParamGrad { weights: vec![T::zero(); c.weights.len()], bias: vec![T::zero(); c.bias.len()] }),
                Layer::Dense(d) => Some(ParamGrad { weights: vec![T::zero(); d.weights.len()], bias: vec![T::zero(); d.bias.len()] }),
                _ => None,
            })
            .collect();
        Self { layers }
    }

    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                    *x = *x + *y;
                }
                for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                    *x = *x + *y;
                }
            }
        }
    }
}

enum Cache<T> {
    Conv { cols: Vec<T>, in_shape: Shape, out_shape: Shape },
    Relu { out: Vec<T> },
    Pool { arg: Vec<u32>, in_shape: Shape },
    Flatten,
    Dense { input: Vec<T> },
    Softmax,
}

/// Cross-entropy loss of one example and the gradient of every parameter.
/// The model must end in a softmax layer.
pub fn loss_and_gradients<T: Real>(model: &NetworkGraph<T>, input: &FeatureMap<T>, label: usize) -> Result<(f64, Gradients<T>), TensorError> {
    if !matches!(model.layers().last(), Some(Layer::Softmax)) {
        return Err(TensorError::InvalidLayer("training requires a final softmax layer".into()));
    }
    if input.shape() != model.input_shape() {
        return Err(TensorError::ShapeMismatch(format!("model expects {}, got {}", model.input_shape(), input.shape())));
    }
    let mut caches = Vec::with_capacity(model.layers().len());
    let mut x = input.data().to_vec();
    let mut shape = input.shape();
    for layer in model.layers() {
        match layer {
            Layer::Conv(conv) => {
                let (y, out, cols) = ops::conv_im2col(&x, shape, conv)?;
                caches.push(Cache::Conv { cols, in_shape: shape, out_shape: out });
                x = y;
                shape = out;
            }
            Layer::Relu => {
                ops::relu(&mut x);
                caches.push(Cache::Relu { out: x.clone() });
            }
            Layer::MaxPool { window, stride } => {
                let out = layer.output_shape(shape)?;
                let (y, arg) = ops::maxpool(&x, shape, *window, *stride, out);
                caches.push(Cache::Pool { arg, in_shape: shape });
                x = y;
                shape = out;
            }
            Layer::Flatten => {
                caches.push(Cache::Flatten);
                shape = Shape::vector(shape.len());
            }
            Layer::Dense(dense) => {
                let out = layer.output_shape(shape)?;
                let y = ops::dense(&x, dense);
                caches.push(Cache::Dense { input: std::mem::replace(&mut x, y) });
                shape = out;
            }
            Layer::Softmax => {
                layer.output_shape(shape)?;
                x = ops::softmax(&x);
                caches.push(Cache::Softmax);
            }
        }
    }
    if label >= x.len() {
        return Err(TensorError::InvalidLabel { label, classes: x.len() });
    }
    let loss = cross_entropy(x[label].as_f64());

    let mut grads = Gradients::zeros_like(model);
    // Softmax followed by cross-entropy: d loss / d logits = p - onehot.
    let mut g = x;
    g[label] = g[label] - T::one();
    for (i, (layer, cache)) in model.layers().iter().zip(caches).enumerate().rev() {
        match (layer, cache) {
            (Layer::Softmax, Cache::Softmax) => {}
            (Layer::Dense(dense), Cache::Dense { input }) => {
                let pg = grads.layers[i].as_mut().expect("dense has params");
                // dW = input^T · g (outer product), db = g.
                T::gemm_raw(dense.inputs, 1, dense.outputs, &input, (1, 1), &g, (dense.outputs, 1), T::one(), &mut pg.weights, dense.outputs);
                for (b, v) in pg.bias.iter_mut().zip(&g) {
                    *b = *b + *v;
                }
                if i > 0 {
                    let mut dx = vec![T::zero(); dense.inputs];
                    T::gemm_raw(dense.inputs, dense.outputs, 1, &dense.weights, (dense.outputs, 1), &g, (1, 1), T::zero(), &mut dx, 1);
                    g = dx;
                }
            }
            (Layer::Flatten, Cache::Flatten) => {}
            (Layer::MaxPool { .. }, Cache::Pool { arg, in_shape }) => {
                let mut dx = vec![T::zero(); in_shape.len()];
                for (a, v) in arg.iter().zip(&g) {
                    dx[*a as usize] = dx[*a as usize] + *v;
                }
                g = dx;
            }
            (Layer::Relu, Cache::Relu { out }) => {
                for (v, o) in g.iter_mut().zip(&out) {
                    if !(*o > T::zero()) {
                        *v = T::zero();
                    }
                }
            }
            (Layer::Conv(conv), Cache::Conv { cols, in_shape, out_shape }) => {
                let p = out_shape.plane();
                let k = conv.filter_len();
                let pg = grads.layers[i].as_mut().expect("conv has params");
                // dW = g (F×P) · cols^T (P×K)
                T::gemm_raw(conv.num_filters, p, k, &g, (p, 1), &cols, (1, p), T::one(), &mut pg.weights, k);
                for (f, b) in pg.bias.iter_mut().enumerate() {
                    let s: f64 = g[f * p..(f + 1) * p].iter().map(|v| v.as_f64()).sum();
                    *b = *b + T::from_f64_lossy(s);
                }
                if i > 0 {
                    // dcols = W^T (K×F) · g (F×P)
                    let mut dcols = vec![T::zero(); k * p];
                    T::gemm_raw(k, conv.num_filters, p, &conv.weights, (1, k), &g, (p, 1), T::zero(), &mut dcols, p);
                    g = ops::col2im(&dcols, in_shape, conv, out_shape);
                }
            }
            _ => unreachable!("cache variant always matches its layer"),
        }
    }
    Ok((loss, grads))
}

/// Mean cross-entropy over `data` without updating weights.
pub fn mean_loss<T: Real>(model: &NetworkGraph<T>, data: &[Example<T>]) -> Result<f64, TensorError> {
    if data.is_empty() {
        return Err(TensorError::EmptyBatch);
    }
    let losses: Vec<f64> = data
        .par_iter()
        .map(|ex| {
            let p = model.forward(&ex.input)?;
            let q = p.get(ex.label).ok_or(TensorError::InvalidLabel { label: ex.label, classes: p.len() })?;
            Ok(cross_entropy(q.as_f64()))
        })
        .collect::<Result<_, TensorError>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// Minibatch SGD on cross-entropy. Returns the mean training loss of each epoch,
/// measured on the fly (each example's loss is taken before its batch's update).
///
/// Batches are processed in parallel per example and reduced in example order,
/// so results are identical for any thread count.
pub fn train<T: Real>(model: &mut NetworkGraph<T>, data: &[Example<T>], cfg: &TrainConfig) -> Result<Vec<f64>, TensorError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TensorError::EmptyBatch);
    }
    let classes = model.num_classes()?;
    if let Some(bad) = data.iter().find(|e| e.label >= classes) {
        return Err(TensorError::InvalidLabel { label: bad.label, classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut losses = vec![0.0f64; data.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Gradients<T>)> = batch
                .par_iter()
                .map(|&i| loss_and_gradients(model, &data[i].input, data[i].label))
                .collect::<Result<_, _>>()?;
            let mut total = Gradients::zeros_like(model);
            for (&i, (loss, g)) in batch.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(TensorError::Divergence { epoch });
                }
                losses[i] = *loss;
                total.accumulate(g);
            }
            sgd_step(model, &total, cfg.learning_rate / batch.len() as f64);
        }
        let mean = losses.iter().sum::<f64>() / data.len() as f64;
        if !mean.is_finite() || !parameters_finite(model) {
            return Err(TensorError::Divergence { epoch });
        }
        history.push(mean);
    }
    Ok(history)
}

fn sgd_step<T: Real>(model: &mut NetworkGraph<T>, grads: &Gradients<T>, scale: f64) {
    let s = T::from_f64_lossy(scale);
    for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
        let Some(g) = g else { continue };
        let (w, b) = match layer {
            Layer::Conv(c) => (&mut c.weights, &mut c.bias),
            Layer::Dense(d) => (&mut d.weights, &mut d.bias),
            _ => continue,
        };
        for (x, d) in w.iter_mut().zip(&g.weights) {
            *x = *x - s * *d;
        }
        for (x, d) in b.iter_mut().zip(&g.bias) {
            *x = *x - s * *d;
        }
    }
}

fn parameters_finite<T: Real>(model: &NetworkGraph<T>) -> bool {
    model.layers().iter().all(|l| match l {
        Layer::Conv(c) => c.weights.iter().chain(&c.bias).all(|v| v.is_finite()),
        Layer::Dense(d) => d.weights.iter().chain(&d.bias).all(|v| v.is_finite()),
        _ => true,
    })
}

/// `-ln p`, clamped away from infinity but propagating NaN.
pub(crate) fn cross_entropy(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    -(p.max(1e-300)).ln()
}
