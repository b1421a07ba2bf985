//! Little-endian binary formats for models and tensors.
//!
//! Model file (`.fpnet`):
//!
//! ```text
//! magic   8 bytes  "FPNET\0\0\1"
//! version u32      1
//! input   u32 × 3  channels, height, width
//! count   u32      number of layers
//! layers           tag u8 followed by a payload:
//!   0 conv     u32 filters, depth, kernel_h, kernel_w, stride; u8 padding (0 valid, 1 same);
//!              f32 × filters·depth·kh·kw weights (filter-major); f32 × filters biases
//!   1 relu
//!   2 maxpool  u32 window, stride
//!   3 flatten
//!   4 dense    u32 inputs, outputs; f32 × inputs·outputs weights (input-major); f32 × outputs biases
//!   5 softmax
//! ```
//!
//! Tensor file (`.fpten`): magic `"FPTEN\0\0\1"`, u32 version 1, u32 channels,
//! height, width, then `f32 × c·h·w` in channel-major order.
//!
//! Floats are written as their IEEE-754 bit patterns, so a save/load round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ConvLayer, DenseLayer, FeatureMap, Layer, NetworkGraph, Padding, Shape, TensorError};

const MODEL_MAGIC: &[u8; 8] = b"FPNET\0\0\x01";
const TENSOR_MAGIC: &[u8; 8] = b"FPTEN\0\0\x01";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: usize) -> std::io::Result<()> {
        let v = u32::try_from(v).map_err(|_| std::io::Error::other("dimension exceeds u32"))?;
        self.0.write_all(&v.to_le_bytes())
    }
    fn f32s(&mut self, v: &[f32]) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 4);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.0.write_all(&buf)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8, TensorError> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<usize, TensorError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, TensorError> {
        let mut buf = vec![0u8; n.checked_mul(4).ok_or_else(|| TensorError::Format("length overflow".into()))?];
        self.0.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
    fn magic(&mut self, expected: &[u8; 8]) -> Result<(), TensorError> {
        let mut m = [0u8; 8];
        self.0.read_exact(&mut m)?;
        if &m != expected {
            return Err(TensorError::Format("bad magic".into()));
        }
        let v = self.u32()?;
        if v != VERSION as usize {
            return Err(TensorError::Format(format!("unsupported version {v}")));
        }
        Ok(())
    }
}

pub fn write_model<W: Write>(model: &NetworkGraph<f32>, out: W) -> Result<(), TensorError> {
    let mut w = Writer(out);
    w.0.write_all(MODEL_MAGIC)?;
    w.u32(VERSION as usize)?;
    let s = model.input_shape();
    w.u32(s.channels)?;
    w.u32(s.height)?;
    w.u32(s.width)?;
    w.u32(model.layers().len())?;
    for layer in model.layers() {
        match layer {
            Layer::Conv(c) => {
                w.u8(0)?;
                for v in [c.num_filters, c.depth, c.kernel_h, c.kernel_w, c.stride] {
                    w.u32(v)?;
                }
                w.u8(match c.padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                })?;
                w.f32s(&c.weights)?;
                w.f32s(&c.bias)?;
            }
            Layer::Relu => w.u8(1)?,
            Layer::MaxPool { window, stride } => {
                w.u8(2)?;
                w.u32(*window)?;
                w.u32(*stride)?;
            }
            Layer::Flatten => w.u8(3)?,
            Layer::Dense(d) => {
                w.u8(4)?;
                w.u32(d.inputs)?;
                w.u32(d.outputs)?;
                w.f32s(&d.weights)?;
                w.f32s(&d.bias)?;
            }
            Layer::Softmax => w.u8(5)?,
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<NetworkGraph<f32>, TensorError> {
    let mut r = Reader(input);
    r.magic(MODEL_MAGIC)?;
    let shape = Shape::new(r.u32()?, r.u32()?, r.u32()?);
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let (num_filters, depth, kernel_h, kernel_w, stride) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                let padding = match r.u8()? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    p => return Err(TensorError::Format(format!("unknown padding tag {p}"))),
                };
                let weights = r.f32s(num_filters * depth * kernel_h * kernel_w)?;
                let bias = r.f32s(num_filters)?;
                Layer::Conv(ConvLayer { num_filters, depth, kernel_h, kernel_w, stride, padding, weights, bias })
            }
            1 => Layer::Relu,
            2 => Layer::MaxPool { window: r.u32()?, stride: r.u32()? },
            3 => Layer::Flatten,
            4 => {
                let (inputs, outputs) = (r.u32()?, r.u32()?);
                let weights = r.f32s(inputs * outputs)?;
                let bias = r.f32s(outputs)?;
                Layer::Dense(DenseLayer::new(inputs, outputs, weights, bias)?)
            }
            5 => Layer::Softmax,
            t => return Err(TensorError::Format(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    NetworkGraph::new(shape, layers)
}

pub fn model_to_bytes(model: &NetworkGraph<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("in-memory write");
    buf
}

pub fn save_model(model: &NetworkGraph<f32>, path: impl AsRef<Path>) -> Result<(), TensorError> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkGraph<f32>, TensorError> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// SHA-256 of the serialized model, hex encoded.
pub fn fingerprint(model: &NetworkGraph<f32>) -> String {
    hex::encode(Sha256::digest(model_to_bytes(model)))
}

pub fn write_tensor<W: Write>(map: &FeatureMap<f32>, out: W) -> Result<(), TensorError> {
    let mut w = Writer(out);
    w.0.write_all(TENSOR_MAGIC)?;
    w.u32(VERSION as usize)?;
    w.u32(map.channels())?;
    w.u32(map.height())?;
    w.u32(map.width())?;
    w.f32s(map.data())?;
    Ok(())
}

pub fn read_tensor<R: Read>(input: R) -> Result<FeatureMap<f32>, TensorError> {
    let mut r = Reader(input);
    r.magic(TENSOR_MAGIC)?;
    let (c, h, w) = (r.u32()?, r.u32()?, r.u32()?);
    let data = r.f32s(c * h * w)?;
    FeatureMap::new(c, h, w, data)
}

pub fn save_tensor(map: &FeatureMap<f32>, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let mut buf = Vec::with_capacity(20 + map.data().len() * 4);
    write_tensor(map, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FeatureMap<f32>, TensorError> {
    read_tensor(std::io::BufReader::new(std::fs::File::open(path)?))
}
