use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::train::TrainState;
use super::{CriticMode, GanConfig};
use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::nn::{read_checkpoint, write_checkpoint, CheckpointData, LayerSpec, NdArray, Network, RmsPropConfig};

const CHECKPOINT_KIND: &str = "topoforge-cwgan";

/// Maps the trained volume-fraction range onto roughly [-1, 1].
pub fn normalize_label(volfrac: f64) -> f64 {
    (volfrac - 0.5) / 0.2
}

/// `(base_h, base_w, stages)`: the resolution is `base * 2^stages` with
/// bases in 3..=16 and at least one stage; the most stages win.
pub(crate) fn stage_plan((h, w): (usize, usize)) -> Result<(usize, usize, usize)> {
    let fits = |n: usize, k: usize| n % (1 << k) == 0 && (3..=16).contains(&(n >> k));
    (1..=12)
        .rev()
        .find(|&k| fits(h, k) && fits(w, k))
        .map(|k| (h >> k, w >> k, k))
        .ok_or_else(|| {
            let valid: Vec<String> = (1..=256)
                .filter(|&n| (1..=7).any(|k| fits(n, k)))
                .map(|n| n.to_string())
                .collect();
            Error::Config(format!(
                "resolution {h}x{w} is not reachable by stride-2 stages; each side must be \
                 base * 2^k with base in 3..=16 and a shared k >= 1 (valid sides up to 256: {})",
                valid.join(", ")
            ))
        })
}

/// Layer chains of the four networks of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub generator_embed: Vec<LayerSpec>,
    pub generator: Vec<LayerSpec>,
    pub critic_embed: Vec<LayerSpec>,
    pub critic: Vec<LayerSpec>,
}

pub fn architecture(cfg: &GanConfig) -> Result<Architecture> {
    cfg.validate()?;
    let (h, w) = cfg.resolution;
    let (bh, bw, stages) = stage_plan(cfg.resolution)?;

    let c0 = cfg.gen_channels;
    let mut generator = vec![
        LayerSpec::dense(cfg.latent_dim, c0 * bh * bw),
        LayerSpec::reshape(vec![c0, bh, bw]),
        LayerSpec::batch_norm(c0),
        LayerSpec::leaky_relu(),
    ];
    let mut ch = c0;
    for s in 0..stages {
        if s + 1 == stages {
            generator.push(LayerSpec::conv_transpose(ch, 1, 4, 2, 1));
            generator.push(LayerSpec::Tanh);
        } else {
            let next = (ch / 2).max(8);
            generator.push(LayerSpec::conv_transpose(ch, next, 4, 2, 1));
            generator.push(LayerSpec::batch_norm(next));
            generator.push(LayerSpec::leaky_relu());
            ch = next;
        }
    }

    let mut critic = Vec::new();
    let mut ch = 1;
    for s in 0..stages {
        let next = (cfg.critic_channels << s).min(cfg.critic_channels * 8);
        critic.push(LayerSpec::conv(ch, next, 4, 2, 1));
        critic.push(LayerSpec::leaky_relu());
        if cfg.dropout > 0.0 {
            critic.push(LayerSpec::dropout(cfg.dropout));
        }
        ch = next;
    }
    critic.push(LayerSpec::dense(ch * bh * bw, 1));
    if cfg.critic_mode == CriticMode::PaperTanh {
        critic.push(LayerSpec::Tanh);
    }

    Ok(Architecture {
        generator_embed: vec![LayerSpec::dense(1, cfg.latent_dim)],
        generator,
        critic_embed: vec![LayerSpec::dense(1, h * w)],
        critic,
    })
}

fn label_batch(volfracs: &[f64]) -> Result<NdArray<f32>> {
    NdArray::new(
        vec![volfracs.len(), 1],
        volfracs.iter().map(|&v| normalize_label(v) as f32).collect(),
    )
}

/// Embeds each label to `target_shape` through `embedding` (a dense map from
/// one value) without caching. The caller multiplies the result in.
pub fn embed_label(embedding: &Network<f32>, volfracs: &[f64], target_shape: &[usize]) -> Result<NdArray<f32>> {
    let mut shape = vec![volfracs.len()];
    shape.extend_from_slice(target_shape);
    embedding.predict(&label_batch(volfracs)?)?.reshape(shape)
}

fn build_embedding(outputs: usize, rng: &mut ChaCha8Rng) -> Result<Network<f32>> {
    let mut net = Network::new(vec![1], vec![LayerSpec::dense(1, outputs)], rng)?;
    // start as a near-identity multiplier
    net.layer_params_mut(0)[1].value.iter_mut().for_each(|b| *b = 1.0);
    Ok(net)
}

fn multiply(a: &NdArray<f32>, b: &NdArray<f32>) -> Result<NdArray<f32>> {
    NdArray::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect())
}

pub struct Generator {
    pub embed: Network<f32>,
    pub body: Network<f32>,
    latent_dim: usize,
    resolution: (usize, usize),
    cache: Option<(NdArray<f32>, NdArray<f32>)>,
}

impl Generator {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    /// Standard-normal latent batch.
    pub fn noise<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> NdArray<f32> {
        let data = (0..count * self.latent_dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        NdArray::new(vec![count, self.latent_dim], data).expect("noise shape")
    }

    /// Training-mode pass returning densities `[N, 1, H, W]` in [0, 1].
    pub(crate) fn forward<R: Rng + ?Sized>(&mut self, z: &NdArray<f32>, volfracs: &[f64], rng: &mut R) -> Result<NdArray<f32>> {
        let e = self.embed.forward(&label_batch(volfracs)?, rng)?;
        let t = self.body.forward(&multiply(z, &e)?, rng)?;
        self.cache = Some((z.clone(), e));
        Ok(to_density(t))
    }

    /// Back-propagates a gradient w.r.t. the densities of the last forward.
    pub(crate) fn backward(&mut self, d_density: &NdArray<f32>) -> Result<()> {
        let (z, _) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("generator backward without forward".into()))?;
        let dh = self.body.backward(&d_density.scaled(0.5))?;
        let de = multiply(&dh, z)?;
        self.embed.backward(&de)?;
        Ok(())
    }

    /// Inference-mode densities for given noise and labels.
    pub fn generate(&self, z: &NdArray<f32>, volfracs: &[f64]) -> Result<NdArray<f32>> {
        if z.batch() != volfracs.len() {
            return Err(Error::Shape(format!(
                "{} noise vectors for {} labels",
                z.batch(),
                volfracs.len()
            )));
        }
        let e = embed_label(&self.embed, volfracs, &[self.latent_dim])?;
        Ok(to_density(self.body.predict(&multiply(z, &e)?)?))
    }

    pub(crate) fn zero_grads(&mut self) {
        self.embed.zero_grads();
        self.body.zero_grads();
    }

    pub(crate) fn rmsprop_step(&mut self, cfg: &RmsPropConfig) -> Result<()> {
        self.embed.rmsprop_step(cfg)?;
        self.body.rmsprop_step(cfg)
    }
}

fn to_density(t: NdArray<f32>) -> NdArray<f32> {
    let shape = t.shape().to_vec();
    let data = t.into_data().into_iter().map(|v| (v + 1.0) * 0.5).collect();
    NdArray::new(shape, data).expect("same shape")
}

pub struct Critic {
    pub embed: Network<f32>,
    pub body: Network<f32>,
    resolution: (usize, usize),
    cache: Option<(NdArray<f32>, NdArray<f32>)>,
}

impl Critic {
    fn image_shape(&self) -> [usize; 3] {
        [1, self.resolution.0, self.resolution.1]
    }

    /// Training-mode scores for images `[N, 1, H, W]`.
    pub(crate) fn forward<R: Rng + ?Sized>(&mut self, x: &NdArray<f32>, volfracs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut shape = vec![volfracs.len()];
        shape.extend_from_slice(&self.image_shape());
        let e = self.embed.forward(&label_batch(volfracs)?, rng)?.reshape(shape)?;
        let s = self.body.forward(&multiply(x, &e)?, rng)?;
        self.cache = Some((x.clone(), e));
        Ok(s.data().iter().map(|&v| f64::from(v)).collect())
    }

    /// Accumulates parameter gradients and returns the image gradient.
    pub(crate) fn backward(&mut self, d_scores: &[f64]) -> Result<NdArray<f32>> {
        let (x, e) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("critic backward without forward".into()))?;
        let ds = NdArray::new(vec![d_scores.len(), 1], d_scores.iter().map(|&v| v as f32).collect())?;
        let dh = self.body.backward(&ds)?;
        let dx = multiply(&dh, e)?;
        let de = multiply(&dh, x)?.reshape(vec![d_scores.len(), self.resolution.0 * self.resolution.1])?;
        self.embed.backward(&de)?;
        Ok(dx)
    }

    /// Inference-mode scores.
    pub fn score(&self, x: &NdArray<f32>, volfracs: &[f64]) -> Result<Vec<f64>> {
        let e = embed_label(&self.embed, volfracs, &self.image_shape())?;
        let s = self.body.predict(&multiply(x, &e)?)?;
        Ok(s.data().iter().map(|&v| f64::from(v)).collect())
    }

    pub(crate) fn zero_grads(&mut self) {
        self.embed.zero_grads();
        self.body.zero_grads();
    }

    pub(crate) fn rmsprop_step(&mut self, cfg: &RmsPropConfig) -> Result<()> {
        self.embed.rmsprop_step(cfg)?;
        self.body.rmsprop_step(cfg)
    }

    pub fn clip_weights(&mut self, c: f64) {
        self.embed.clip_weights(c);
        self.body.clip_weights(c);
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.embed.max_abs_param().max(self.body.max_abs_param())
    }
}

/// Generated structures with the wall-clock cost of producing them.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub fields: Vec<DensityField>,
    pub seconds_per_sample: f64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: GanConfig,
    architecture: Architecture,
    state: Option<TrainState>,
}

pub struct CwganModel {
    pub config: GanConfig,
    pub generator: Generator,
    pub critic: Critic,
}

impl CwganModel {
    /// Fresh model with weights drawn from `config.seed`.
    pub fn new(config: &GanConfig) -> Result<Self> {
        let arch = architecture(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, w) = config.resolution;
        let generator = Generator {
            embed: build_embedding(config.latent_dim, &mut rng)?,
            body: Network::new(vec![config.latent_dim], arch.generator, &mut rng)?,
            latent_dim: config.latent_dim,
            resolution: config.resolution,
            cache: None,
        };
        let critic = Critic {
            embed: build_embedding(h * w, &mut rng)?,
            body: Network::new(vec![1, h, w], arch.critic, &mut rng)?,
            resolution: config.resolution,
            cache: None,
        };
        Ok(Self {
            config: config.clone(),
            generator,
            critic,
        })
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.config.resolution
    }

    pub(crate) fn to_checkpoint(&self, state: Option<&TrainState>) -> Result<CheckpointData> {
        let meta = Meta {
            kind: CHECKPOINT_KIND.into(),
            config: self.config.clone(),
            architecture: architecture(&self.config)?,
            state: state.cloned(),
        };
        let mut tensors = self.generator.embed.export_tensors("generator_embed");
        tensors.extend(self.generator.body.export_tensors("generator"));
        tensors.extend(self.critic.embed.export_tensors("critic_embed"));
        tensors.extend(self.critic.body.export_tensors("critic"));
        Ok(CheckpointData {
            meta: serde_json::to_value(meta).map_err(|e| Error::Config(e.to_string()))?,
            tensors,
        })
    }

    pub fn save(&self, path: &Path, state: Option<&TrainState>) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint(state)?)
    }

    /// Loads a model and, when present, its training counters.
    pub fn load_with_state(path: &Path) -> Result<(Self, Option<TrainState>)> {
        let data = read_checkpoint(path)?;
        let meta: Meta = serde_json::from_value(data.meta.clone())
            .map_err(|e| Error::format(path, format!("invalid model metadata: {e}")))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::format(path, format!("checkpoint kind {:?} is not a CWGAN model", meta.kind)));
        }
        let mut model = Self::new(&meta.config).map_err(|e| Error::format(path, e.to_string()))?;
        if architecture(&meta.config)? != meta.architecture {
            return Err(Error::format(path, "stored architecture does not match its configuration"));
        }
        let tensors = data.tensor_map();
        let restore = |net: &mut Network<f32>, prefix: &str| {
            net.import_tensors(prefix, &tensors).map_err(|e| Error::format(path, e.to_string()))
        };
        restore(&mut model.generator.embed, "generator_embed")?;
        restore(&mut model.generator.body, "generator")?;
        restore(&mut model.critic.embed, "critic_embed")?;
        restore(&mut model.critic.body, "critic")?;
        Ok((model, meta.state))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_state(path).map(|(m, _)| m)
    }

    /// `count` raw structures for one condition, noise drawn from `seed`.
    pub fn sample(&self, volfrac: f64, count: usize, seed: u64) -> Result<SampleOutput> {
        if count == 0 {
            return Err(Error::Parameter("sample count must be at least 1".into()));
        }
        if !volfrac.is_finite() {
            return Err(Error::Parameter(format!("condition {volfrac} is not finite")));
        }
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = self.generator.noise(count, &mut rng);
        let out = self.generator.generate(&z, &vec![volfrac; count])?;
        let (h, w) = self.resolution();
        let fields = (0..count)
            .map(|i| DensityField::from_f32_clamped(w, h, out.sample(i)))
            .collect::<Result<Vec<_>>>()?;
        let seconds_per_sample = start.elapsed().as_secs_f64() / count as f64;
        Ok(SampleOutput { fields, seconds_per_sample })
    }
}
