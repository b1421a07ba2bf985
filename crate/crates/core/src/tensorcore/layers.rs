use serde::{Deserialize, Serialize};

use super::{FilterTensor, Real, Shape, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output spatial size is `(in - k) / stride + 1`.
    Valid,
    /// Zero padding so that output spatial size is `ceil(in / stride)`.
    Same,
}

/// Resolved padding for one spatial axis: `(output_len, pad_before)`.
pub(crate) fn axis_geometry(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < kernel {
                None
            } else {
                Some(((input - kernel) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, needed / 2))
        }
    }
}

/// A convolution layer. Filters are stored contiguously as a
/// `num_filters × (depth · kernel_h · kernel_w)` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f32> {
    pub(crate) num_filters: usize,
    pub(crate) depth: usize,
    pub(crate) kernel_h: usize,
    pub(crate) kernel_w: usize,
    pub(crate) stride: usize,
    pub(crate) padding: Padding,
    pub(crate) weights: Vec<T>,
    pub(crate) bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    /// Zero-initialized layer.
    pub fn zeros(num_filters: usize, depth: usize, kernel_h: usize, kernel_w: usize, stride: usize, padding: Padding) -> Self {
        Self {
            num_filters,
            depth,
            kernel_h,
            kernel_w,
            stride,
            padding,
            weights: vec![T::zero(); num_filters * depth * kernel_h * kernel_w],
            bias: vec![T::zero(); num_filters],
        }
    }

    /// Assemble a layer from individual filters, which must share one geometry.
    pub fn from_filters(filters: Vec<FilterTensor<T>>, stride: usize, padding: Padding) -> Result<Self, TensorError> {
        let first = filters.first().ok_or(TensorError::EmptyLayer)?;
        let (depth, kernel_h, kernel_w) = (first.depth, first.kernel_h, first.kernel_w);
        if stride == 0 {
            return Err(TensorError::InvalidLayer("stride must be at least 1".into()));
        }
        let mut weights = Vec::with_capacity(filters.len() * depth * kernel_h * kernel_w);
        let mut bias = Vec::with_capacity(filters.len());
        for f in &filters {
            if (f.depth, f.kernel_h, f.kernel_w) != (depth, kernel_h, kernel_w) {
                return Err(TensorError::InvalidLayer(format!(
                    "filter geometry {}x{}x{} differs from {}x{}x{}",
                    f.depth, f.kernel_h, f.kernel_w, depth, kernel_h, kernel_w
                )));
            }
            weights.extend_from_slice(&f.weights);
            bias.push(f.bias);
        }
        Ok(Self { num_filters: filters.len(), depth, kernel_h, kernel_w, stride, padding, weights, bias })
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Number of weights in one filter.
    pub fn filter_len(&self) -> usize {
        self.depth * self.kernel_h * self.kernel_w
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn filter_weights(&self, j: usize) -> &[T] {
        let len = self.filter_len();
        &self.weights[j * len..(j + 1) * len]
    }

    pub fn filter_weights_mut(&mut self, j: usize) -> &mut [T] {
        let len = self.filter_len();
        &mut self.weights[j * len..(j + 1) * len]
    }

    pub fn filter(&self, j: usize) -> FilterTensor<T> {
        FilterTensor {
            depth: self.depth,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            weights: self.filter_weights(j).to_vec(),
            bias: self.bias[j],
        }
    }

    pub fn filters(&self) -> Vec<FilterTensor<T>> {
        (0..self.num_filters).map(|j| self.filter(j)).collect()
    }

    pub fn set_filter(&mut self, j: usize, filter: &FilterTensor<T>) -> Result<(), TensorError> {
        if (filter.depth, filter.kernel_h, filter.kernel_w) != (self.depth, self.kernel_h, self.kernel_w) {
            return Err(TensorError::InvalidLayer("filter geometry does not match layer".into()));
        }
        self.filter_weights_mut(j).copy_from_slice(&filter.weights);
        self.bias[j] = filter.bias;
        Ok(())
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, TensorError> {
        if input.channels != self.depth {
            return Err(TensorError::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.depth, input.channels
            )));
        }
        let rows = axis_geometry(input.height, self.kernel_h, self.stride, self.padding);
        let cols = axis_geometry(input.width, self.kernel_w, self.stride, self.padding);
        match (rows, cols) {
            (Some((h, _)), Some((w, _))) => Ok(Shape::new(self.num_filters, h, w)),
            _ => Err(TensorError::ShapeMismatch(format!(
                "input {}x{} smaller than kernel {}x{}",
                input.height, input.width, self.kernel_h, self.kernel_w
            ))),
        }
    }

    pub(crate) fn pads(&self, input: Shape) -> (usize, usize) {
        let (_, top) = axis_geometry(input.height, self.kernel_h, self.stride, self.padding).unwrap_or((0, 0));
        let (_, left) = axis_geometry(input.width, self.kernel_w, self.stride, self.padding).unwrap_or((0, 0));
        (top, left)
    }

    pub fn cast<U: Real>(&self) -> ConvLayer<U> {
        ConvLayer {
            num_filters: self.num_filters,
            depth: self.depth,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            stride: self.stride,
            padding: self.padding,
            weights: cast_vec(&self.weights),
            bias: cast_vec(&self.bias),
        }
    }
}

/// Fully connected layer. `weights` is `inputs × outputs` row-major, so row `i`
/// holds every weight fed by input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T = f32> {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<T>,
    pub(crate) bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    pub fn new(inputs: usize, outputs: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self, TensorError> {
        if weights.len() != inputs * outputs {
            return Err(TensorError::DataLength { expected: inputs * outputs, actual: weights.len() });
        }
        if bias.len() != outputs {
            return Err(TensorError::DataLength { expected: outputs, actual: bias.len() });
        }
        Ok(Self { inputs, outputs, weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn cast<U: Real>(&self) -> DenseLayer<U> {
        DenseLayer { inputs: self.inputs, outputs: self.outputs, weights: cast_vec(&self.weights), bias: cast_vec(&self.bias) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv(ConvLayer<T>),
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
    Dense(DenseLayer<T>),
    Softmax,
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, Layer::Conv(_) | Layer::Dense(_))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, TensorError> {
        match self {
            Layer::Conv(conv) => conv.output_shape(input),
            Layer::Relu => Ok(input),
            Layer::MaxPool { window, stride } => {
                if *window == 0 || *stride == 0 {
                    return Err(TensorError::InvalidLayer("pool window and stride must be positive".into()));
                }
                if input.height < *window || input.width < *window {
                    return Err(TensorError::ShapeMismatch(format!(
                        "pool window {window} larger than input {}x{}",
                        input.height, input.width
                    )));
                }
                Ok(Shape::new(input.channels, (input.height - window) / stride + 1, (input.width - window) / stride + 1))
            }
            Layer::Flatten => Ok(Shape::vector(input.len())),
            Layer::Dense(dense) => {
                if input.len() != dense.inputs || input.plane() != 1 {
                    return Err(TensorError::ShapeMismatch(format!(
                        "dense expects a flat vector of {}, got {input}",
                        dense.inputs
                    )));
                }
                Ok(Shape::vector(dense.outputs))
            }
            Layer::Softmax => {
                if input.plane() != 1 {
                    return Err(TensorError::ShapeMismatch(format!("softmax expects a flat vector, got {input}")));
                }
                Ok(input)
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv(c) => Layer::Conv(c.cast()),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool { window, stride } => Layer::MaxPool { window: *window, stride: *stride },
            Layer::Flatten => Layer::Flatten,
            Layer::Dense(d) => Layer::Dense(d.cast()),
            Layer::Softmax => Layer::Softmax,
        }
    }
}

fn cast_vec<T: Real, U: Real>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect()
}
