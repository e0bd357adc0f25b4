use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{critic_loss, critic_loss_grad, generator_loss, generator_loss_grad, smoothed_critic_loss, smoothed_critic_loss_grad};
use super::model::CwganModel;
use super::{CriticMode, GanConfig};
use crate::dataset::LoadedDataset;
use crate::error::{Error, Result};
use crate::nn::{NdArray, RmsPropConfig};

pub const MODEL_FILE: &str = "model.cwto";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshots.jsonl";

const PROBE_CONDITIONS: [f64; 3] = [0.3, 0.5, 0.7];
const PROBE_SAMPLES: usize = 4;

/// Position in the schedule; enough to resume bit-for-bit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    /// Next real batch within `epoch`.
    pub batch: usize,
    pub generator_steps: u64,
    pub critic_steps: u64,
}

impl TrainState {
    pub fn optimizer_steps(&self) -> u64 {
        self.generator_steps + self.critic_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Critic,
    Generator,
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: usize,
    pub generator_step: u64,
    pub kind: StepKind,
    pub critic_loss: Option<f64>,
    pub generator_loss: Option<f64>,
    /// `mean(D(real)) - mean(D(fake))` on the critic batch.
    pub wasserstein: Option<f64>,
    pub max_critic_weight: Option<f64>,
    pub wall_ms: f64,
}

impl StepMetrics {
    /// Equality of everything except wall-clock time.
    pub fn same_values(&self, other: &StepMetrics) -> bool {
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        self.step == other.step
            && self.epoch == other.epoch
            && self.generator_step == other.generator_step
            && self.kind == other.kind
            && bits(self.critic_loss) == bits(other.critic_loss)
            && bits(self.generator_loss) == bits(other.generator_loss)
            && bits(self.wasserstein) == bits(other.wasserstein)
            && bits(self.max_critic_weight) == bits(other.max_critic_weight)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProbeSnapshot {
    volfrac: f64,
    mean_density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpochSnapshot {
    epoch: usize,
    generator_step: u64,
    probes: Vec<ProbeSnapshot>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub checkpoint_dir: PathBuf,
    /// Save every this many generator steps; 0 saves only at the end.
    pub checkpoint_every: u64,
    /// Stop (and checkpoint) once this many generator steps are done.
    pub stop_after_generator_steps: Option<u64>,
    /// Continue from `checkpoint_dir/model.cwto` when it exists.
    pub resume: bool,
}

impl TrainOptions {
    pub fn new(checkpoint_dir: impl Into<PathBuf>) -> Self {
        Self {
            checkpoint_dir: checkpoint_dir.into(),
            checkpoint_every: 500,
            stop_after_generator_steps: None,
            resume: false,
        }
    }
}

pub struct TrainOutcome {
    pub model: CwganModel,
    pub state: TrainState,
    /// Records produced by this call (not those before a resume point).
    pub metrics: Vec<StepMetrics>,
    pub checkpoint: PathBuf,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(step)))
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    splitmix(splitmix(seed.rotate_left(17)) ^ epoch as u64)
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepMetrics>> {
    read_jsonl(path, false)
}

/// With `torn_tail`, an unparsable final line is dropped: a run killed
/// mid-write leaves one behind.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, torn_tail: bool) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>().map_err(|e| Error::io(path, e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if torn_tail && Some(i) == last => {}
            Err(e) => return Err(Error::format(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::format(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn same_schedule(a: &GanConfig, b: &GanConfig) -> bool {
    GanConfig { epochs: 0, ..a.clone() } == GanConfig { epochs: 0, ..b.clone() }
}

struct Run<'a> {
    model: CwganModel,
    state: TrainState,
    data: &'a LoadedDataset,
    cfg: GanConfig,
    rms: RmsPropConfig,
    metrics_path: PathBuf,
    metrics: BufWriter<File>,
    produced: Vec<StepMetrics>,
}

impl Run<'_> {
    fn record(&mut self, m: StepMetrics, progress: &mut impl FnMut(&StepMetrics)) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, &m).map_err(|e| Error::format(&self.metrics_path, e.to_string()))?;
        self.metrics.write_all(b"\n").map_err(|e| Error::io(&self.metrics_path, e))?;
        progress(&m);
        self.produced.push(m);
        Ok(())
    }

    fn critic_step(&mut self, real: &NdArray<f32>, labels: &[f64]) -> Result<StepMetrics> {
        let start = Instant::now();
        let step = self.state.optimizer_steps();
        let mut rng = step_rng(self.cfg.seed, step);
        let n = labels.len();
        let z = self.model.generator.noise(n, &mut rng);
        let fake = self.model.generator.forward(&z, labels, &mut rng)?;

        let mut shape = real.shape().to_vec();
        shape[0] = 2 * n;
        let mut both = real.data().to_vec();
        both.extend_from_slice(fake.data());
        let both = NdArray::new(shape, both)?;
        let both_labels: Vec<f64> = labels.iter().chain(labels).copied().collect();

        let critic = &mut self.model.critic;
        critic.zero_grads();
        let scores = critic.forward(&both, &both_labels, &mut rng)?;
        let (real_s, fake_s) = scores.split_at(n);
        let smoothed = self.cfg.critic_mode == CriticMode::PaperTanh && self.cfg.label_smoothing;
        let (loss, (g_real, g_fake)) = if smoothed {
            (smoothed_critic_loss(real_s, fake_s), smoothed_critic_loss_grad(real_s, fake_s))
        } else {
            (critic_loss(real_s, fake_s), critic_loss_grad(real_s, fake_s))
        };
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite critic loss at step {step}")));
        }
        let grads: Vec<f64> = g_real.into_iter().chain(g_fake).collect();
        critic.backward(&grads)?;
        critic.rmsprop_step(&self.rms)?;
        critic.clip_weights(self.cfg.clip_c);
        let wasserstein = -critic_loss(real_s, fake_s);
        self.state.critic_steps += 1;
        Ok(StepMetrics {
            step,
            epoch: self.state.epoch,
            generator_step: self.state.generator_steps,
            kind: StepKind::Critic,
            critic_loss: Some(loss),
            generator_loss: None,
            wasserstein: Some(wasserstein),
            max_critic_weight: Some(critic.max_abs_weight()),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn generator_step(&mut self, labels: &[f64]) -> Result<StepMetrics> {
        let start = Instant::now();
        let step = self.state.optimizer_steps();
        let mut rng = step_rng(self.cfg.seed, step);
        let gen = &mut self.model.generator;
        let z = gen.noise(labels.len(), &mut rng);
        let fake = gen.forward(&z, labels, &mut rng)?;
        let critic = &mut self.model.critic;
        critic.zero_grads();
        let scores = critic.forward(&fake, labels, &mut rng)?;
        let loss = generator_loss(&scores);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite generator loss at step {step}")));
        }
        let dx = critic.backward(&generator_loss_grad(&scores))?;
        // the critic's gradients from this pass are discarded
        critic.zero_grads();
        gen.zero_grads();
        gen.backward(&dx)?;
        gen.rmsprop_step(&self.rms)?;
        self.state.generator_steps += 1;
        Ok(StepMetrics {
            step,
            epoch: self.state.epoch,
            generator_step: self.state.generator_steps,
            kind: StepKind::Generator,
            critic_loss: None,
            generator_loss: Some(loss),
            wasserstein: None,
            max_critic_weight: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn checkpoint(&mut self, dir: &Path) -> Result<PathBuf> {
        self.metrics.flush().map_err(|e| Error::io(&self.metrics_path, e))?;
        let path = dir.join(MODEL_FILE);
        self.model.save(&path, Some(&self.state))?;
        Ok(path)
    }

    fn snapshot(&self, dir: &Path) -> Result<()> {
        let mut probes = Vec::new();
        for &v in &PROBE_CONDITIONS {
            let out = self.model.sample(v, PROBE_SAMPLES, self.cfg.seed)?;
            let mean = out.fields.iter().map(|f| f.mean()).sum::<f64>() / PROBE_SAMPLES as f64;
            probes.push(ProbeSnapshot { volfrac: v, mean_density: mean });
        }
        let snap = EpochSnapshot {
            epoch: self.state.epoch,
            generator_step: self.state.generator_steps,
            probes,
        };
        let path = dir.join(SNAPSHOT_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(&snap).map_err(|e| Error::format(&path, e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }
}

/// Alternating WGAN training. Each real batch drives `n_critic` critic
/// updates (fresh noise each, weights clipped after every update) followed
/// by one generator update. Every optimizer step appends a record to
/// `metrics.jsonl`; checkpoints carry the full state needed to resume.
pub fn train(
    data: &LoadedDataset,
    cfg: &GanConfig,
    opts: &TrainOptions,
    mut progress: impl FnMut(&StepMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if (data.nely, data.nelx) != cfg.resolution {
        return Err(Error::Config(format!(
            "dataset is {}x{} (nely x nelx) but the model resolution is {}x{}",
            data.nely, data.nelx, cfg.resolution.0, cfg.resolution.1
        )));
    }
    let dir = &opts.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let model_path = dir.join(MODEL_FILE);
    let metrics_path = dir.join(METRICS_FILE);
    let snapshot_path = dir.join(SNAPSHOT_FILE);

    let (model, state) = if opts.resume && model_path.exists() {
        let (mut model, state) = CwganModel::load_with_state(&model_path)?;
        let state = state.ok_or_else(|| Error::State(format!("{} holds no training state", model_path.display())))?;
        if !same_schedule(&model.config, cfg) {
            return Err(Error::Config(format!(
                "{} was trained with a different configuration",
                model_path.display()
            )));
        }
        model.config.epochs = cfg.epochs;
        // drop records written after the checkpoint
        let mut kept: Vec<StepMetrics> = if metrics_path.exists() { read_jsonl(&metrics_path, true)? } else { Vec::new() };
        if (kept.len() as u64) < state.optimizer_steps() {
            return Err(Error::State(format!(
                "{} has {} records but the checkpoint is at step {}",
                metrics_path.display(),
                kept.len(),
                state.optimizer_steps()
            )));
        }
        kept.truncate(state.optimizer_steps() as usize);
        write_jsonl(&metrics_path, &kept)?;
        if snapshot_path.exists() {
            let snaps: Vec<EpochSnapshot> = read_jsonl(&snapshot_path, true)?;
            let snaps: Vec<_> = snaps.into_iter().filter(|s| s.epoch <= state.epoch).collect();
            write_jsonl(&snapshot_path, &snaps)?;
        }
        (model, state)
    } else {
        write_jsonl::<StepMetrics>(&metrics_path, &[])?;
        write_jsonl::<EpochSnapshot>(&snapshot_path, &[])?;
        (CwganModel::new(cfg)?, TrainState::default())
    };

    let file = OpenOptions::new().append(true).open(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut run = Run {
        model,
        state,
        data,
        cfg: cfg.clone(),
        rms: RmsPropConfig { lr: cfg.lr, epsilon: cfg.rms_epsilon, ..Default::default() },
        metrics_path,
        metrics: BufWriter::new(file),
        produced: Vec::new(),
    };
    let (h, w) = cfg.resolution;
    let batches = data.batch_count(cfg.batch_size);
    let done = |s: &TrainState| opts.stop_after_generator_steps.is_some_and(|n| s.generator_steps >= n);

    'epochs: while run.state.epoch < cfg.epochs {
        let order = run.data.permutation(shuffle_seed(cfg.seed, run.state.epoch));
        while run.state.batch < batches {
            if done(&run.state) {
                break 'epochs;
            }
            let b = run.state.batch;
            let end = ((b + 1) * cfg.batch_size).min(order.len());
            let batch = run.data.gather(&order[b * cfg.batch_size..end]);
            let labels: Vec<f64> = batch.labels.iter().map(|&v| f64::from(v)).collect();
            let real = NdArray::new(vec![labels.len(), 1, h, w], batch.grids)?;
            for _ in 0..cfg.n_critic {
                let m = run.critic_step(&real, &labels)?;
                run.record(m, &mut progress)?;
            }
            let m = run.generator_step(&labels)?;
            run.record(m, &mut progress)?;
            run.state.batch += 1;
            if opts.checkpoint_every > 0 && run.state.generator_steps % opts.checkpoint_every == 0 {
                run.checkpoint(dir)?;
            }
        }
        run.state.epoch += 1;
        run.state.batch = 0;
        run.snapshot(dir)?;
    }
    let checkpoint = run.checkpoint(dir)?;
    Ok(TrainOutcome {
        model: run.model,
        state: run.state,
        metrics: run.produced,
        checkpoint,
    })
}
