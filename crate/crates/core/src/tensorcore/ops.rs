//! Per-layer kernels shared by inference and training.

use super::{ConvLayer, DenseLayer, FeatureMap, Real, Shape, TensorError};

/// Unfold `input` into a `(depth · kh · kw) × (out_h · out_w)` patch matrix.
pub(crate) fn im2col<T: Real>(input: &[T], in_shape: Shape, conv: &ConvLayer<T>, out: Shape) -> Vec<T> {
    let (kh, kw, s) = (conv.kernel_h, conv.kernel_w, conv.stride);
    let (pt, pl) = conv.pads(in_shape);
    let (h, w) = (in_shape.height as isize, in_shape.width as isize);
    let p = out.plane();
    let mut cols = vec![T::zero(); conv.filter_len() * p];
    let mut row = 0;
    for c in 0..conv.depth {
        let plane = &input[c * in_shape.plane()..(c + 1) * in_shape.plane()];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..out.height {
                    let iy = (oy * s + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let src = &plane[iy as usize * in_shape.width..(iy as usize + 1) * in_shape.width];
                    let drow = &mut dst[oy * out.width..(oy + 1) * out.width];
                    if s == 1 && pl == 0 && kx + out.width <= in_shape.width {
                        drow.copy_from_slice(&src[kx..kx + out.width]);
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pl as isize;
                            if ix >= 0 && ix < w {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Fold a patch-matrix gradient back onto the input, accumulating overlaps.
pub(crate) fn col2im<T: Real>(cols: &[T], in_shape: Shape, conv: &ConvLayer<T>, out: Shape) -> Vec<T> {
    let (kh, kw, s) = (conv.kernel_h, conv.kernel_w, conv.stride);
    let (pt, pl) = conv.pads(in_shape);
    let (h, w) = (in_shape.height as isize, in_shape.width as isize);
    let p = out.plane();
    let mut dx = vec![T::zero(); in_shape.len()];
    let mut row = 0;
    for c in 0..conv.depth {
        let plane = &mut dx[c * in_shape.plane()..(c + 1) * in_shape.plane()];
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..out.height {
                    let iy = (oy * s + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let base = iy as usize * in_shape.width;
                    for ox in 0..out.width {
                        let ix = (ox * s + kx) as isize - pl as isize;
                        if ix >= 0 && ix < w {
                            plane[base + ix as usize] = plane[base + ix as usize] + src[oy * out.width + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

/// Convolution as `weights · patches + bias`. Returns the output and the patch matrix.
pub(crate) fn conv_im2col<T: Real>(input: &[T], in_shape: Shape, conv: &ConvLayer<T>) -> Result<(Vec<T>, Shape, Vec<T>), TensorError> {
    let out = conv.output_shape(in_shape)?;
    let cols = im2col(input, in_shape, conv, out);
    let p = out.plane();
    let k = conv.filter_len();
    let mut y = Vec::with_capacity(out.len());
    for &b in &conv.bias {
        y.extend(std::iter::repeat_n(b, p));
    }
    T::gemm_raw(conv.num_filters, k, p, &conv.weights, (k, 1), &cols, (p, 1), T::one(), &mut y, p);
    Ok((y, out, cols))
}

/// Apply one convolution layer to a feature map.
pub fn conv_forward<T: Real>(input: &FeatureMap<T>, conv: &ConvLayer<T>) -> Result<FeatureMap<T>, TensorError> {
    let (y, out, _) = conv_im2col(input.data(), input.shape(), conv)?;
    Ok(FeatureMap::from_parts(out, y))
}

/// Direct nested-loop convolution. Every kernel tap evaluated, including taps
/// landing on zero padding, increments `macs` by one.
pub fn conv_forward_direct<T: Real>(input: &FeatureMap<T>, conv: &ConvLayer<T>, macs: &mut u64) -> Result<FeatureMap<T>, TensorError> {
    let in_shape = input.shape();
    let out = conv.output_shape(in_shape)?;
    let (pt, pl) = conv.pads(in_shape);
    let mut y = Vec::with_capacity(out.len());
    for f in 0..conv.num_filters {
        let filter = conv.filter_weights(f);
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut acc = conv.bias[f].as_f64();
                for d in 0..conv.depth {
                    for ky in 0..conv.kernel_h {
                        for kx in 0..conv.kernel_w {
                            let iy = (oy * conv.stride + ky) as isize - pt as isize;
                            let ix = (ox * conv.stride + kx) as isize - pl as isize;
                            let x = if iy >= 0 && ix >= 0 && (iy as usize) < in_shape.height && (ix as usize) < in_shape.width {
                                input.get(d, iy as usize, ix as usize).as_f64()
                            } else {
                                0.0
                            };
                            acc += filter[(d * conv.kernel_h + ky) * conv.kernel_w + kx].as_f64() * x;
                            *macs += 1;
                        }
                    }
                }
                y.push(T::from_f64_lossy(acc));
            }
        }
    }
    Ok(FeatureMap::from_parts(out, y))
}

pub(crate) fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Max pooling; returns pooled values and the flat input index of each maximum.
pub(crate) fn maxpool<T: Real>(x: &[T], in_shape: Shape, window: usize, stride: usize, out: Shape) -> (Vec<T>, Vec<u32>) {
    let mut y = Vec::with_capacity(out.len());
    let mut arg = Vec::with_capacity(out.len());
    for c in 0..out.channels {
        let base = c * in_shape.plane();
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut best = base + oy * stride * in_shape.width + ox * stride;
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = base + (oy * stride + ky) * in_shape.width + ox * stride + kx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                y.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (y, arg)
}

pub(crate) fn dense<T: Real>(x: &[T], layer: &DenseLayer<T>) -> Vec<T> {
    let mut y = layer.bias.clone();
    T::gemm_raw(1, layer.inputs, layer.outputs, x, (layer.inputs, 1), &layer.weights, (layer.outputs, 1), T::one(), &mut y, layer.outputs);
    y
}

/// Numerically stable softmax, normalized in 64-bit.
pub(crate) fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let exps: Vec<f64> = x.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| T::from_f64_lossy(e / sum)).collect()
}
