use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::TensorEntry;
use super::layer::{self, Cache, LayerSpec};
use super::tensor::NdArray;
use super::Scalar;
use crate::error::{Error, Result};

/// Standard deviation of the normal weight initialisation.
pub const INIT_STD: f64 = 0.02;

/// Trainable tensor with its gradient and RMSProp accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<S>,
    pub grad: Vec<S>,
    pub accum: Vec<S>,
}

impl<S: Scalar> Param<S> {
    fn new(name: String, shape: Vec<usize>, value: Vec<S>) -> Self {
        let n = value.len();
        Self {
            name,
            shape,
            value,
            grad: vec![S::zero(); n],
            accum: vec![S::zero(); n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

struct Layer<S> {
    spec: LayerSpec,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    params: Vec<Param<S>>,
    buffers: Vec<Vec<S>>,
    cache: Option<Cache<S>>,
}

/// Sequential chain of layers.
pub struct Network<S> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    training: bool,
}

impl<S: Scalar> Network<S> {
    /// Builds the chain for a per-sample `input_shape`, drawing weights from
    /// N(0, 0.02). Biases and batch-norm shifts start at zero, scales at one.
    pub fn new<R: Rng + ?Sized>(input_shape: Vec<usize>, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            let out_shape = spec
                .output_shape(&shape)
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", spec.name())))?;
            let params = spec
                .param_shapes()
                .into_iter()
                .map(|(name, pshape)| {
                    let n: usize = pshape.iter().product();
                    let value = match name {
                        "weight" => (0..n).map(|_| S::of(normal.sample(rng))).collect(),
                        "gamma" => vec![S::one(); n],
                        _ => vec![S::zero(); n],
                    };
                    Param::new(name.to_string(), pshape, value)
                })
                .collect();
            let buffers = spec
                .buffer_shapes()
                .into_iter()
                .map(|(name, n)| vec![if name == "running_var" { S::one() } else { S::zero() }; n])
                .collect();
            layers.push(Layer {
                spec,
                in_shape: shape.clone(),
                out_shape: out_shape.clone(),
                params,
                buffers,
                cache: None,
            });
            shape = out_shape;
        }
        Ok(Self {
            input_shape,
            layers,
            training: true,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.out_shape)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Training mode uses batch statistics and active dropout.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn layer_params(&self, index: usize) -> &[Param<S>] {
        &self.layers[index].params
    }

    pub fn layer_params_mut(&mut self, index: usize) -> &mut [Param<S>] {
        &mut self.layers[index].params
    }

    pub fn layer_buffers(&self, index: usize) -> &[Vec<S>] {
        &self.layers[index].buffers
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<S>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    fn check_input(&self, input: &NdArray<S>) -> Result<()> {
        if input.shape().len() < 2 || input.sample_shape() != self.input_shape.as_slice() || input.batch() == 0 {
            return Err(Error::Shape(format!(
                "layer 0 expects batches of {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass that caches activations for [`Network::backward`].
    pub fn forward<R: Rng + ?Sized>(&mut self, input: &NdArray<S>, rng: &mut R) -> Result<NdArray<S>> {
        self.check_input(input)?;
        let training = self.training;
        let mut x = input.clone();
        for layer in &mut self.layers {
            let (y, cache, stats) = layer::forward(
                &layer.spec,
                &layer.params,
                &layer.buffers,
                &layer.in_shape,
                &layer.out_shape,
                &x,
                training,
                rng,
            )?;
            if let (Some(stats), LayerSpec::BatchNorm { momentum, .. }) = (stats, &layer.spec) {
                let m = S::of(*momentum);
                let unbiased = S::one() - m;
                for (r, b) in layer.buffers[0].iter_mut().zip(&stats.mean) {
                    *r = m * *r + unbiased * *b;
                }
                for (r, b) in layer.buffers[1].iter_mut().zip(&stats.var) {
                    *r = m * *r + unbiased * *b;
                }
            }
            layer.cache = cache;
            x = y;
        }
        Ok(x)
    }

    /// Inference pass: running statistics, no dropout, nothing cached.
    pub fn predict(&self, input: &NdArray<S>) -> Result<NdArray<S>> {
        self.check_input(input)?;
        // dropout is inactive in inference mode, so this generator is never drawn from
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer::forward(
                &layer.spec,
                &layer.params,
                &layer.buffers,
                &layer.in_shape,
                &layer.out_shape,
                &x,
                false,
                &mut unused,
            )?
            .0;
        }
        Ok(x)
    }

    /// Back-propagates `upstream` (gradient of the loss w.r.t. the last
    /// forward output), accumulating parameter gradients and returning the
    /// gradient w.r.t. the input.
    pub fn backward(&mut self, upstream: &NdArray<S>) -> Result<NdArray<S>> {
        let out = self.output_shape().to_vec();
        if upstream.shape().len() < 2 || upstream.sample_shape() != out.as_slice() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {out:?}",
                upstream.shape()
            )));
        }
        let mut dy = upstream.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let cache = layer.cache.as_ref().ok_or_else(|| {
                Error::State(format!("layer {i} ({}) has no cached forward pass", layer.spec.name()))
            })?;
            dy = layer::backward(&layer.spec, &mut layer.params, &layer.in_shape, &layer.out_shape, cache, &dy)
                .map_err(|e| match e {
                    Error::Shape(m) => Error::Shape(format!("layer {i} ({}): {m}", layer.spec.name())),
                    other => other,
                })?;
        }
        Ok(dy)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = S::zero());
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.cache = None;
        }
    }

    /// One RMSProp update from the accumulated gradients. Fails without
    /// touching any parameter if a gradient is not finite.
    pub fn rmsprop_step(&mut self, config: &RmsPropConfig) -> Result<()> {
        for p in self.params() {
            if let Some(j) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {} at index {j}",
                    p.name
                )));
            }
        }
        let (lr, rho, eps) = (S::of(config.lr), S::of(config.decay), S::of(config.epsilon));
        let keep = S::one() - rho;
        for p in self.params_mut() {
            for ((v, s), &g) in p.value.iter_mut().zip(p.accum.iter_mut()).zip(&p.grad) {
                *s = rho * *s + keep * g * g;
                *v = *v - lr * g / (*s + eps).sqrt();
            }
        }
        Ok(())
    }

    /// Clamps every trainable value to `[-clip, clip]`.
    pub fn clip_weights(&mut self, clip: f64) {
        let c = S::of(clip.abs());
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = v.max(-c).min(c));
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params()
            .flat_map(|p| p.value.iter())
            .fold(0.0, |m, v| m.max(v.as_f64().abs()))
    }

    /// Parameters, buffers and optimizer state as named `f32` tensors.
    pub fn export_tensors(&self, prefix: &str) -> Vec<TensorEntry> {
        let to_f32 = |v: &[S]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<_>>();
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in &layer.params {
                out.push(TensorEntry::new(format!("{prefix}.{i}.{}", p.name), p.shape.clone(), to_f32(&p.value)));
            }
            for ((name, n), buf) in layer.spec.buffer_shapes().into_iter().zip(&layer.buffers) {
                out.push(TensorEntry::new(format!("{prefix}.{i}.{name}"), vec![n], to_f32(buf)));
            }
            for p in &layer.params {
                out.push(TensorEntry::new(format!("{prefix}.{i}.{}.rms", p.name), p.shape.clone(), to_f32(&p.accum)));
            }
        }
        out
    }

    /// Restores tensors written by [`Network::export_tensors`].
    pub fn import_tensors(&mut self, prefix: &str, tensors: &HashMap<String, TensorEntry>) -> Result<()> {
        let fetch = |name: String, len: usize| -> Result<Vec<S>> {
            let t = tensors
                .get(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
            if t.data.len() != len {
                return Err(Error::Shape(format!(
                    "tensor {name} has {} values, network expects {len}",
                    t.data.len()
                )));
            }
            Ok(t.data.iter().map(|&v| S::of(f64::from(v))).collect())
        };
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for p in &mut layer.params {
                p.value = fetch(format!("{prefix}.{i}.{}", p.name), p.value.len())?;
                p.accum = fetch(format!("{prefix}.{i}.{}.rms", p.name), p.value.len())?;
            }
            for ((name, n), buf) in layer.spec.buffer_shapes().into_iter().zip(&mut layer.buffers) {
                *buf = fetch(format!("{prefix}.{i}.{name}"), n)?;
            }
        }
        Ok(())
    }
}
