//! Conditional Wasserstein GAN over density grids.
//!
//! The volume-fraction label is embedded by a trainable dense map and
//! multiplied into the latent noise (generator) or the image (critic).

mod loss;
mod model;
mod train;

pub use loss::{critic_loss, critic_loss_grad, generator_loss, generator_loss_grad, smoothed_critic_loss, smoothed_critic_loss_grad, SMOOTH_TARGET};
pub use model::{architecture, embed_label, normalize_label, Critic, CwganModel, Generator, SampleOutput};
pub use train::{read_metrics, train, StepKind, StepMetrics, TrainOptions, TrainOutcome, TrainState, METRICS_FILE, MODEL_FILE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conditions the desk and full datasets span.
pub const TRAINED_RANGE: (f64, f64) = (0.3, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Unbounded critic score.
    #[default]
    Linear,
    /// Score squashed by tanh into (-1, 1).
    PaperTanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    /// `(height, width)` = `(nely, nelx)`.
    pub resolution: (usize, usize),
    pub latent_dim: usize,
    pub lr: f64,
    /// RMSProp epsilon, added to the squared-gradient average under the
    /// square root. Gradients through a critic clipped to +-0.01 are around
    /// 1e-10, so this must sit far below their square to keep the update
    /// normalized.
    pub rms_epsilon: f64,
    pub clip_c: f64,
    pub n_critic: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub critic_mode: CriticMode,
    /// Squared-error targets of +-0.9 in `paper_tanh` mode; no effect in
    /// linear mode.
    pub label_smoothing: bool,
    /// Generator channels at the smallest spatial size; halved per stage.
    pub gen_channels: usize,
    /// Critic channels after the first convolution; doubled per stage.
    pub critic_channels: usize,
    pub dropout: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            resolution: (120, 120),
            latent_dim: 120,
            lr: 5e-5,
            rms_epsilon: 1e-30,
            clip_c: 0.01,
            n_critic: 5,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            critic_mode: CriticMode::Linear,
            label_smoothing: false,
            gen_channels: 256,
            critic_channels: 32,
            dropout: 0.2,
        }
    }
}

impl GanConfig {
    /// Small 48x48 model sized for a single CPU core.
    pub fn desk() -> Self {
        Self {
            resolution: (48, 48),
            batch_size: 32,
            epochs: 500,
            gen_channels: 64,
            critic_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(self.rms_epsilon > 0.0 && self.rms_epsilon.is_finite()) {
            return bad(format!("rms_epsilon must be positive, got {}", self.rms_epsilon));
        }
        if !(self.clip_c > 0.0 && self.clip_c.is_finite()) {
            return bad(format!("clip_c must be positive, got {}", self.clip_c));
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.gen_channels == 0 || self.critic_channels == 0 {
            return bad("channel widths must be positive".into());
        }
        model::stage_plan(self.resolution).map(|_| ())
    }
}

/// Requested volume fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionLabel(f64);

impl ConditionLabel {
    pub fn new(volfrac: f64) -> Result<Self> {
        if !volfrac.is_finite() {
            return Err(Error::Parameter(format!("condition {volfrac} is not finite")));
        }
        Ok(Self(volfrac))
    }

    pub fn volfrac(self) -> f64 {
        self.0
    }

    pub fn in_training_range(self) -> bool {
        (TRAINED_RANGE.0..=TRAINED_RANGE.1).contains(&self.0)
    }
}
