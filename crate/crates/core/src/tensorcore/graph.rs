use rayon::prelude::*;

use super::ops;
use super::{ConvLayer, FeatureMap, Layer, Real, Shape, TensorError};

/// Ordered layer stack with a fixed input shape. Layer ids are indices into
/// [`NetworkGraph::layers`]; pruning and accounting address layers by id.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph<T = f32> {
    input_shape: Shape,
    layers: Vec<Layer<T>>,
}

/// A classifier input paired with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T = f32> {
    pub input: FeatureMap<T>,
    pub label: usize,
}

/// Post-ReLU outputs of one conv layer, one map per example (channel `j` is filter `j`).
#[derive(Debug, Clone)]
pub struct LayerActivations<T = f32> {
    pub layer_id: usize,
    pub maps: Vec<FeatureMap<T>>,
}

impl<T: Real> NetworkGraph<T> {
    /// Build a graph, checking that every layer accepts its predecessor's output.
    pub fn new(input_shape: Shape, layers: Vec<Layer<T>>) -> Result<Self, TensorError> {
        let graph = Self { input_shape, layers };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        self.shapes().map(|_| ())
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to layer parameters. Changing layer geometry through this
    /// handle can break shape compatibility; call [`NetworkGraph::validate`] afterwards.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Output shape of every layer, in order.
    pub fn shapes(&self) -> Result<Vec<Shape>, TensorError> {
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(shape)
                .map_err(|e| TensorError::ShapeMismatch(format!("layer {i} ({}): {e}", layer.name())))?;
            out.push(shape);
        }
        Ok(out)
    }

    /// Input shape of layer `id`.
    pub fn input_shape_of(&self, id: usize) -> Result<Shape, TensorError> {
        if id == 0 {
            return Ok(self.input_shape);
        }
        Ok(self.shapes()?[id - 1])
    }

    pub fn output_shape(&self) -> Result<Shape, TensorError> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input_shape))
    }

    pub fn num_classes(&self) -> Result<usize, TensorError> {
        Ok(self.output_shape()?.len())
    }

    pub fn conv_layer_ids(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| matches!(l, Layer::Conv(_))).map(|(i, _)| i).collect()
    }

    pub fn conv(&self, id: usize) -> Option<&ConvLayer<T>> {
        match self.layers.get(id) {
            Some(Layer::Conv(c)) => Some(c),
            _ => None,
        }
    }

    pub fn conv_mut(&mut self, id: usize) -> Option<&mut ConvLayer<T>> {
        match self.layers.get_mut(id) {
            Some(Layer::Conv(c)) => Some(c),
            _ => None,
        }
    }

    /// Class probabilities for one input.
    pub fn forward(&self, input: &FeatureMap<T>) -> Result<Vec<T>, TensorError> {
        self.forward_observed(input, |_, _| {})
    }

    /// Forward pass that hands every layer's output to `observe(layer_id, output)`.
    pub fn forward_observed(&self, input: &FeatureMap<T>, mut observe: impl FnMut(usize, &FeatureMap<T>)) -> Result<Vec<T>, TensorError> {
        if input.shape() != self.input_shape {
            return Err(TensorError::ShapeMismatch(format!("model expects {}, got {}", self.input_shape, input.shape())));
        }
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = self.apply(layer, x)?;
            observe(i, &x);
        }
        Ok(x.into_data())
    }

    fn apply(&self, layer: &Layer<T>, x: FeatureMap<T>) -> Result<FeatureMap<T>, TensorError> {
        let shape = x.shape();
        Ok(match layer {
            Layer::Conv(conv) => ops::conv_forward(&x, conv)?,
            Layer::Relu => {
                let mut data = x.into_data();
                ops::relu(&mut data);
                FeatureMap::from_parts(shape, data)
            }
            Layer::MaxPool { window, stride } => {
                let out = layer.output_shape(shape)?;
                let (y, _) = ops::maxpool(x.data(), shape, *window, *stride, out);
                FeatureMap::from_parts(out, y)
            }
            Layer::Flatten => FeatureMap::from_parts(Shape::vector(shape.len()), x.into_data()),
            Layer::Dense(dense) => {
                let out = layer.output_shape(shape)?;
                FeatureMap::from_parts(out, ops::dense(x.data(), dense))
            }
            Layer::Softmax => {
                layer.output_shape(shape)?;
                FeatureMap::from_parts(shape, ops::softmax(x.data()))
            }
        })
    }

    /// Predicted class (argmax, lowest index on ties).
    pub fn predict(&self, input: &FeatureMap<T>) -> Result<usize, TensorError> {
        let probs = self.forward(input)?;
        Ok(argmax(&probs))
    }

    /// Post-ReLU activation maps of every conv layer that is directly followed by a ReLU.
    pub fn record_activations(&self, batch: &[FeatureMap<T>]) -> Result<Vec<LayerActivations<T>>, TensorError> {
        if batch.is_empty() {
            return Err(TensorError::EmptyBatch);
        }
        let taps = self.relu_taps();
        let per_example: Vec<Vec<FeatureMap<T>>> = batch
            .par_iter()
            .map(|input| {
                let mut maps = Vec::with_capacity(taps.len());
                self.forward_observed(input, |i, out| {
                    if taps.iter().any(|&(_, relu)| relu == i) {
                        maps.push(out.clone());
                    }
                })?;
                Ok(maps)
            })
            .collect::<Result<_, TensorError>>()?;
        let mut result: Vec<LayerActivations<T>> =
            taps.iter().map(|&(conv, _)| LayerActivations { layer_id: conv, maps: Vec::with_capacity(batch.len()) }).collect();
        for maps in per_example {
            for (slot, map) in result.iter_mut().zip(maps) {
                slot.maps.push(map);
            }
        }
        Ok(result)
    }

    /// `(conv_id, relu_id)` pairs for conv layers immediately followed by ReLU.
    pub fn relu_taps(&self) -> Vec<(usize, usize)> {
        self.layers
            .windows(2)
            .enumerate()
            .filter(|(_, w)| matches!((&w[0], &w[1]), (Layer::Conv(_), Layer::Relu)))
            .map(|(i, _)| (i, i + 1))
            .collect()
    }

    /// Same graph with every parameter converted to `U`.
    pub fn cast<U: Real>(&self) -> NetworkGraph<U> {
        NetworkGraph { input_shape: self.input_shape, layers: self.layers.iter().map(Layer::cast).collect() }
    }

    /// Total number of scalar parameters (weights and biases).
    pub fn parameter_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::Dense(d) => d.weights.len() + d.bias.len(),
                _ => 0,
            })
            .sum()
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
