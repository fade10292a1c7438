//! Graph texture GAN: a GCN part encoder, a per-face color generator fed
//! with replicated noise, an image discriminator, and the training loop.

mod networks;
mod train;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::engine::{EngineError, Tensor};
use crate::eval::{EvalError, MIN_IMAGE_SIDE};
use crate::render::{RenderError, Shading, ViewRing};

pub use networks::{Discriminator, Encoder, Generator, GraphInput, Model};
pub use train::{compute_losses, Losses, Sample, StepMetrics, Trainer, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("non-finite value at step {step}: {source}")]
    NonFinite { step: u64, source: EngineError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorVariant {
    /// Seven dense layers applied per face, with two additive skips.
    Ggan,
    /// Seven graph convolutions, no skips.
    Gcn,
}

impl GeneratorVariant {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorVariant::Ggan => "ggan",
            GeneratorVariant::Gcn => "gcn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ggan" => Some(GeneratorVariant::Ggan),
            "gcn" => Some(GeneratorVariant::Gcn),
            _ => None,
        }
    }
}

/// Network sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: GeneratorVariant,
    pub encoder_layers: usize,
    pub encoder_width: usize,
    pub generator_width: usize,
    pub noise_dim: usize,
    pub disc_layers: usize,
    /// Channels of the first discriminator layer; doubled per layer.
    pub disc_channels: usize,
    /// Side of the square renders fed to the discriminator.
    pub image_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: GeneratorVariant::Ggan,
            encoder_layers: 3,
            encoder_width: 64,
            generator_width: 64,
            noise_dim: 16,
            disc_layers: 4,
            disc_channels: 32,
            image_size: 64,
        }
    }
}

pub const GENERATOR_LAYERS: usize = 7;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.encoder_layers == 0 || self.encoder_width == 0 || self.generator_width == 0 {
            return bad("layer counts and widths must be positive".into());
        }
        if self.noise_dim == 0 {
            return bad("noise_dim must be at least 1".into());
        }
        if self.disc_layers == 0 || self.disc_channels == 0 {
            return bad("discriminator needs at least one layer and channel".into());
        }
        if self.image_size < MIN_IMAGE_SIDE {
            return bad(format!("image_size must be at least {MIN_IMAGE_SIDE}"));
        }
        let div = 1usize << self.disc_layers.min(30);
        if !self.image_size.is_multiple_of(div) {
            return bad(format!(
                "image_size {} is not divisible by 2^disc_layers = {div}",
                self.image_size
            ));
        }
        // instance normalization of a 1×1 map is identically zero
        if self.disc_layers >= 2 && self.image_size / div < 2 {
            return bad("discriminator reduces the image below 2×2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Non-saturating GAN loss plus the weighted perceptual term.
    Adversarial,
    /// Pure image mean squared error against the real renders; no
    /// discriminator updates.
    Reconstruction,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Adversarial => "adversarial",
            LossMode::Reconstruction => "reconstruction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adversarial" => Some(LossMode::Adversarial),
            "reconstruction" => Some(LossMode::Reconstruction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Weight of the perceptual term.
    pub lambda: f64,
    pub lr: f64,
    pub views: usize,
    pub elevation: f64,
    pub distance: f64,
    pub fov: f64,
    pub shading: Shading,
    pub background: [f64; 3],
    pub loss: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lambda: 0.1,
            lr: 1e-4,
            views: 8,
            elevation: 20.0,
            distance: 2.2,
            fov: 45.0,
            shading: Shading::Unlit,
            background: [1.0; 3],
            loss: LossMode::Adversarial,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn ring(&self) -> ViewRing {
        ViewRing {
            count: self.views,
            elevation: self.elevation,
            distance: self.distance,
            fov_y: self.fov,
            image_size: self.model.image_size,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.model.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ModelError::Config(format!(
                "lambda {} must be ≥ 0",
                self.lambda
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config(format!("lr {} must be ≥ 0", self.lr)));
        }
        if self.views == 0 {
            return Err(ModelError::Config("views must be at least 1".into()));
        }
        Ok(())
    }
}

/// `d` i.i.d. standard normal draws.
pub fn sample_noise<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Appends a copy of `z` to every row of `rows` (`v × f` → `v × (f + d)`).
pub fn replicate_concat(z: &[f64], rows: &Tensor) -> Result<Tensor, ModelError> {
    let (v, f) = rows
        .dims2()
        .ok_or_else(|| ModelError::Data(format!("rows of shape {:?}", rows.shape())))?;
    let mut out = Vec::with_capacity(v * (f + z.len()));
    for i in 0..v {
        out.extend_from_slice(rows.row(i));
        out.extend_from_slice(z);
    }
    Ok(Tensor::new(vec![v, f + z.len()], out)?)
}
