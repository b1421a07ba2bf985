use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConvLayer, DenseLayer, Layer, NetworkGraph, Padding, Shape, TensorError};

/// Architecture description, independent of weights. This is what experiment
/// configs carry; [`build`] turns it into an initialized [`NetworkGraph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Softmax,
}

fn one() -> usize {
    1
}

fn same() -> Padding {
    Padding::Same
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Four 3×3 conv blocks of 40/40/80/80 filters; a coarse final pool keeps
    /// the classifier head small so conv layers dominate the parameter count.
    /// Filter counts are multiples of 20, so `floor(p% · n)` is exact for
    /// p ∈ {5, 15, 30, 50, 70, 95}.
    DeskVgg,
    /// Thirteen-conv VGG16 feature stack with a 256-unit hidden dense layer.
    /// Not tuned for the 128×128 radar maps; kept for accounting.
    Vgg16,
    /// Two conv layers and a dense head for fast tests.
    Toy,
}

impl Preset {
    pub fn layers(self, classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let conv = |filters| Conv { filters, kernel: 3, stride: 1, padding: Padding::Same };
        let pool = |w| MaxPool { window: w, stride: w };
        match self {
            #[rustfmt::skip]
            Preset::DeskVgg => vec![
                conv(40), Relu, pool(2),
                conv(40), Relu, pool(2),
                conv(80), Relu, pool(2),
                conv(80), Relu, pool(8),
                Flatten, Dense { units: classes }, Softmax,
            ],
            Preset::Vgg16 => {
                let mut v = Vec::new();
                for (reps, filters) in [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)] {
                    for _ in 0..reps {
                        v.push(conv(filters));
                        v.push(Relu);
                    }
                    v.push(pool(2));
                }
                v.extend([Flatten, Dense { units: 256 }, Relu, Dense { units: classes }, Softmax]);
                v
            }
            Preset::Toy => vec![conv(4), Relu, pool(2), conv(6), Relu, pool(2), Flatten, Dense { units: classes }, Softmax],
        }
    }
}

/// Instantiate `specs` on `input_shape` with seeded Glorot-uniform weights and zero biases.
pub fn build(input_shape: Shape, specs: &[LayerSpec], seed: u64) -> Result<NetworkGraph<f32>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = input_shape;
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let layer = match *spec {
            LayerSpec::Conv { filters, kernel, stride, padding } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(TensorError::InvalidLayer("conv filters, kernel and stride must be positive".into()));
                }
                let mut conv = ConvLayer::zeros(filters, shape.channels, kernel, kernel, stride, padding);
                let fan_in = shape.channels * kernel * kernel;
                let fan_out = filters * kernel * kernel;
                glorot(&mut rng, &mut conv.weights, fan_in, fan_out);
                Layer::Conv(conv)
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool { window, stride } => Layer::MaxPool { window, stride },
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(TensorError::InvalidLayer("dense units must be positive".into()));
                }
                let mut dense = DenseLayer::zeros(shape.len(), units);
                glorot(&mut rng, &mut dense.weights, shape.len(), units);
                Layer::Dense(dense)
            }
            LayerSpec::Softmax => Layer::Softmax,
        };
        shape = layer.output_shape(shape)?;
        layers.push(layer);
    }
    NetworkGraph::new(input_shape, layers)
}

fn glorot(rng: &mut ChaCha8Rng, w: &mut [f32], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in w {
        *v = rng.random_range(-limit..limit) as f32;
    }
}
