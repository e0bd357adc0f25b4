use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::ConvGeometry;
use super::network::Param;
use super::tensor::NdArray;
use super::Scalar;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.2;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    BatchNorm {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    Dropout {
        rate: f64,
    },
    LeakyRelu {
        alpha: f64,
    },
    Tanh,
    /// Per-sample target shape.
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding }
    }

    pub fn conv_transpose(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::ConvTranspose { in_channels, out_channels, kernel, stride, padding }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            momentum: DEFAULT_BN_MOMENTUM,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn leaky_relu() -> Self {
        LayerSpec::LeakyRelu { alpha: DEFAULT_LEAKY_ALPHA }
    }

    pub fn reshape(shape: Vec<usize>) -> Self {
        LayerSpec::Reshape { shape }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::ConvTranspose { .. } => "conv_transpose",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let count: usize = input.iter().product();
        match *self {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => {
                let [c, h, w] = image_dims(input)?;
                check_conv_params(c, in_channels, kernel, stride)?;
                let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                if hp < kernel || wp < kernel {
                    return Err(format!("kernel {kernel} larger than padded input {hp}x{wp}"));
                }
                Ok(vec![out_channels, (hp - kernel) / stride + 1, (wp - kernel) / stride + 1])
            }
            LayerSpec::ConvTranspose { in_channels, out_channels, kernel, stride, padding } => {
                let [c, h, w] = image_dims(input)?;
                check_conv_params(c, in_channels, kernel, stride)?;
                let grow = |n: usize| ((n - 1) * stride + kernel).checked_sub(2 * padding);
                match (grow(h), grow(w)) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok(vec![out_channels, oh, ow]),
                    _ => Err(format!("padding {padding} too large for input {h}x{w}")),
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                if count != inputs {
                    return Err(format!("expects {inputs} inputs, got shape {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::BatchNorm { channels, .. } => {
                if input.first() != Some(&channels) {
                    return Err(format!("expects {channels} channels, got shape {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh => Ok(input.to_vec()),
            LayerSpec::Reshape { ref shape } => {
                if shape.iter().product::<usize>() != count {
                    return Err(format!("cannot reshape {input:?} into {shape:?}"));
                }
                Ok(shape.clone())
            }
        }
    }

    /// Trainable parameters as `(name, shape)`.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Conv { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::ConvTranspose { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![in_channels, out_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::Dense { inputs, outputs } => {
                vec![("weight", vec![outputs, inputs]), ("bias", vec![outputs])]
            }
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("gamma", vec![channels]), ("beta", vec![channels])]
            }
            _ => vec![],
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, usize)> {
        match *self {
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("running_mean", channels), ("running_var", channels)]
            }
            _ => vec![],
        }
    }
}

fn image_dims(input: &[usize]) -> std::result::Result<[usize; 3], String> {
    match *input {
        [c, h, w] if h > 0 && w > 0 => Ok([c, h, w]),
        _ => Err(format!("expects a channels x height x width input, got {input:?}")),
    }
}

fn check_conv_params(c: usize, in_channels: usize, kernel: usize, stride: usize) -> std::result::Result<(), String> {
    if c != in_channels {
        return Err(format!("expects {in_channels} channels, got {c}"));
    }
    if kernel == 0 || stride == 0 {
        return Err("kernel and stride must be positive".into());
    }
    Ok(())
}

pub(crate) enum Cache<S> {
    Cols(Vec<S>),
    Input(NdArray<S>),
    Output(NdArray<S>),
    Mask(Vec<S>),
    Norm { xhat: Vec<S>, inv_std: Vec<S>, training: bool },
    Reshape(Vec<usize>),
}

/// Batch statistics produced by a training-mode batch norm.
pub(crate) struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

fn conv_geometry(spec: &LayerSpec, image: &[usize], other: &[usize]) -> ConvGeometry {
    // `image` is the side the kernel slides over, `other` the side it produces
    let (kernel, stride, padding) = match *spec {
        LayerSpec::Conv { kernel, stride, padding, .. }
        | LayerSpec::ConvTranspose { kernel, stride, padding, .. } => (kernel, stride, padding),
        _ => unreachable!("not a convolution"),
    };
    ConvGeometry {
        channels: image[0],
        height: image[1],
        width: image[2],
        kernel,
        stride,
        padding,
        out_h: other[1],
        out_w: other[2],
    }
}

fn add_channel_bias<S: Scalar>(y: &mut [S], bias: &[S], plane: usize) {
    for (chunk, &b) in y.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn accumulate_channel_bias<S: Scalar>(dy: &[S], grad: &mut [S], plane: usize) {
    let channels = grad.len();
    for (i, chunk) in dy.chunks(plane).enumerate() {
        let c = i % channels;
        grad[c] = grad[c] + chunk.iter().copied().sum::<S>();
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn forward<S: Scalar, R: Rng + ?Sized>(
    spec: &LayerSpec,
    params: &[Param<S>],
    buffers: &[Vec<S>],
    in_shape: &[usize],
    out_shape: &[usize],
    x: &NdArray<S>,
    training: bool,
    rng: &mut R,
) -> Result<(NdArray<S>, Option<Cache<S>>, Option<BatchStats<S>>)> {
    let n = x.batch();
    let mut full_out = vec![n];
    full_out.extend_from_slice(out_shape);
    match *spec {
        LayerSpec::Conv { out_channels, .. } => {
            let g = conv_geometry(spec, in_shape, out_shape);
            let (rows, ncols) = (g.rows(), g.cols());
            let mut cols = vec![S::zero(); n * rows * ncols];
            let mut y = NdArray::zeros(full_out);
            let out_len = out_channels * ncols;
            for i in 0..n {
                let c = &mut cols[i * rows * ncols..(i + 1) * rows * ncols];
                g.im2col(x.sample(i), c);
                let yi = &mut y.data_mut()[i * out_len..(i + 1) * out_len];
                S::gemm(out_channels, rows, ncols, &params[0].value, false, c, false, yi, false);
            }
            add_channel_bias(y.data_mut(), &params[1].value, ncols);
            Ok((y, Some(Cache::Cols(cols)), None))
        }
        LayerSpec::ConvTranspose { in_channels, .. } => {
            let g = conv_geometry(spec, out_shape, in_shape);
            let (rows, ncols) = (g.rows(), g.cols());
            let mut cols = vec![S::zero(); rows * ncols];
            let mut y = NdArray::zeros(full_out);
            let out_len: usize = out_shape.iter().product();
            for i in 0..n {
                S::gemm(rows, in_channels, ncols, &params[0].value, true, x.sample(i), false, &mut cols, false);
                g.col2im(&cols, &mut y.data_mut()[i * out_len..(i + 1) * out_len]);
            }
            add_channel_bias(y.data_mut(), &params[1].value, out_shape[1] * out_shape[2]);
            Ok((y, Some(Cache::Input(x.clone())), None))
        }
        LayerSpec::Dense { inputs, outputs } => {
            let mut y = NdArray::zeros(full_out);
            S::gemm(n, inputs, outputs, x.data(), false, &params[0].value, true, y.data_mut(), false);
            add_channel_bias(y.data_mut(), &params[1].value, 1);
            Ok((y, Some(Cache::Input(x.clone())), None))
        }
        LayerSpec::BatchNorm { channels, momentum: _, epsilon } => {
            let plane: usize = in_shape[1..].iter().product();
            let count = S::of((n * plane) as f64);
            let eps = S::of(epsilon);
            let (mean, var) = if training {
                let mut mean = vec![S::zero(); channels];
                let mut var = vec![S::zero(); channels];
                for (i, chunk) in x.data().chunks(plane).enumerate() {
                    let c = i % channels;
                    mean[c] = mean[c] + chunk.iter().copied().sum::<S>();
                }
                mean.iter_mut().for_each(|m| *m = *m / count);
                for (i, chunk) in x.data().chunks(plane).enumerate() {
                    let c = i % channels;
                    let m = mean[c];
                    var[c] = var[c] + chunk.iter().map(|&v| (v - m) * (v - m)).sum::<S>();
                }
                var.iter_mut().for_each(|v| *v = *v / count);
                (mean, var)
            } else {
                (buffers[0].clone(), buffers[1].clone())
            };
            let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
            let (gamma, beta) = (&params[0].value, &params[1].value);
            let mut xhat = vec![S::zero(); x.len()];
            let mut y = NdArray::zeros(full_out);
            for (i, (src, (xh, dst))) in x
                .data()
                .chunks(plane)
                .zip(xhat.chunks_mut(plane).zip(y.data_mut().chunks_mut(plane)))
                .enumerate()
            {
                let c = i % channels;
                for ((&v, h), o) in src.iter().zip(xh.iter_mut()).zip(dst.iter_mut()) {
                    *h = (v - mean[c]) * inv_std[c];
                    *o = gamma[c] * *h + beta[c];
                }
            }
            let stats = training.then_some(BatchStats { mean, var });
            Ok((y, Some(Cache::Norm { xhat, inv_std, training }), stats))
        }
        LayerSpec::Dropout { rate } => {
            if !training || rate == 0.0 {
                let mask = vec![S::one(); x.len()];
                return Ok((x.clone(), Some(Cache::Mask(mask)), None));
            }
            let keep = S::of(1.0 / (1.0 - rate));
            let mask: Vec<S> = (0..x.len())
                .map(|_| if rng.gen::<f64>() < rate { S::zero() } else { keep })
                .collect();
            let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
            Ok((NdArray::new(full_out, data)?, Some(Cache::Mask(mask)), None))
        }
        LayerSpec::LeakyRelu { alpha } => {
            let a = S::of(alpha);
            let data = x.data().iter().map(|&v| if v > S::zero() { v } else { a * v }).collect();
            Ok((NdArray::new(full_out, data)?, Some(Cache::Input(x.clone())), None))
        }
        LayerSpec::Tanh => {
            let y = NdArray::new(full_out, x.data().iter().map(|v| v.tanh()).collect())?;
            Ok((y.clone(), Some(Cache::Output(y)), None))
        }
        LayerSpec::Reshape { .. } => {
            let y = x.clone().reshape(full_out)?;
            Ok((y, Some(Cache::Reshape(x.shape().to_vec())), None))
        }
    }
}

pub(crate) fn backward<S: Scalar>(
    spec: &LayerSpec,
    params: &mut [Param<S>],
    in_shape: &[usize],
    out_shape: &[usize],
    cache: &Cache<S>,
    dy: &NdArray<S>,
) -> Result<NdArray<S>> {
    let n = dy.batch();
    let mut full_in = vec![n];
    full_in.extend_from_slice(in_shape);
    let bad_cache = || Error::State(format!("{} layer holds a mismatched cache", spec.name()));
    match (spec, cache) {
        (&LayerSpec::Conv { out_channels, .. }, Cache::Cols(cols)) => {
            let g = conv_geometry(spec, in_shape, out_shape);
            let (rows, ncols) = (g.rows(), g.cols());
            let mut dx = NdArray::zeros(full_in);
            let mut dcols = vec![S::zero(); rows * ncols];
            let in_len: usize = in_shape.iter().product();
            let (weight, rest) = params.split_at_mut(1);
            for i in 0..n {
                let dyi = dy.sample(i);
                let c = &cols[i * rows * ncols..(i + 1) * rows * ncols];
                S::gemm(out_channels, ncols, rows, dyi, false, c, true, &mut weight[0].grad, true);
                S::gemm(rows, out_channels, ncols, &weight[0].value, true, dyi, false, &mut dcols, false);
                g.col2im(&dcols, &mut dx.data_mut()[i * in_len..(i + 1) * in_len]);
            }
            accumulate_channel_bias(dy.data(), &mut rest[0].grad, ncols);
            Ok(dx)
        }
        (&LayerSpec::ConvTranspose { in_channels, .. }, Cache::Input(x)) => {
            let g = conv_geometry(spec, out_shape, in_shape);
            let (rows, ncols) = (g.rows(), g.cols());
            let mut dx = NdArray::zeros(full_in);
            let mut dcols = vec![S::zero(); rows * ncols];
            let in_len: usize = in_shape.iter().product();
            let (weight, rest) = params.split_at_mut(1);
            for i in 0..n {
                g.im2col(dy.sample(i), &mut dcols);
                let dxi = &mut dx.data_mut()[i * in_len..(i + 1) * in_len];
                S::gemm(in_channels, rows, ncols, &weight[0].value, false, &dcols, false, dxi, false);
                S::gemm(in_channels, ncols, rows, x.sample(i), false, &dcols, true, &mut weight[0].grad, true);
            }
            accumulate_channel_bias(dy.data(), &mut rest[0].grad, out_shape[1] * out_shape[2]);
            Ok(dx)
        }
        (&LayerSpec::Dense { inputs, outputs }, Cache::Input(x)) => {
            let mut dx = NdArray::zeros(full_in);
            let (weight, rest) = params.split_at_mut(1);
            S::gemm(outputs, n, inputs, dy.data(), true, x.data(), false, &mut weight[0].grad, true);
            S::gemm(n, outputs, inputs, dy.data(), false, &weight[0].value, false, dx.data_mut(), false);
            accumulate_channel_bias(dy.data(), &mut rest[0].grad, 1);
            Ok(dx)
        }
        (&LayerSpec::BatchNorm { channels, .. }, Cache::Norm { xhat, inv_std, training }) => {
            let plane: usize = in_shape[1..].iter().product();
            let mut sum_dy = vec![S::zero(); channels];
            let mut sum_dy_xhat = vec![S::zero(); channels];
            for (i, (d, h)) in dy.data().chunks(plane).zip(xhat.chunks(plane)).enumerate() {
                let c = i % channels;
                sum_dy[c] = sum_dy[c] + d.iter().copied().sum::<S>();
                sum_dy_xhat[c] = sum_dy_xhat[c] + d.iter().zip(h).map(|(&a, &b)| a * b).sum::<S>();
            }
            let gamma = params[0].value.clone();
            for c in 0..channels {
                params[0].grad[c] = params[0].grad[c] + sum_dy_xhat[c];
                params[1].grad[c] = params[1].grad[c] + sum_dy[c];
            }
            let count = S::of((n * plane) as f64);
            let mut dx = NdArray::zeros(full_in);
            for (i, (out, (d, h))) in dx
                .data_mut()
                .chunks_mut(plane)
                .zip(dy.data().chunks(plane).zip(xhat.chunks(plane)))
                .enumerate()
            {
                let c = i % channels;
                let scale = gamma[c] * inv_std[c];
                for ((o, &dv), &hv) in out.iter_mut().zip(d).zip(h) {
                    *o = if *training {
                        scale * (dv - sum_dy[c] / count - hv * sum_dy_xhat[c] / count)
                    } else {
                        scale * dv
                    };
                }
            }
            Ok(dx)
        }
        (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
            let data = dy.data().iter().zip(mask).map(|(&d, &m)| d * m).collect();
            NdArray::new(full_in, data)
        }
        (&LayerSpec::LeakyRelu { alpha }, Cache::Input(x)) => {
            let a = S::of(alpha);
            let data = dy
                .data()
                .iter()
                .zip(x.data())
                .map(|(&d, &v)| if v > S::zero() { d } else { a * d })
                .collect();
            NdArray::new(full_in, data)
        }
        (LayerSpec::Tanh, Cache::Output(y)) => {
            let data = dy
                .data()
                .iter()
                .zip(y.data())
                .map(|(&d, &t)| d * (S::one() - t * t))
                .collect();
            NdArray::new(full_in, data)
        }
        (LayerSpec::Reshape { .. }, Cache::Reshape(shape)) => dy.clone().reshape(shape.clone()),
        _ => Err(bad_cache()),
    }
}
