use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::geom::Vec3;
use crate::model::{GeneratorVariant, LossMode, TrainConfig};
use crate::render::{Shading, DEFAULT_AMBIENT, DEFAULT_LIGHT};

/// Every option of every command, read from `key = value` text.
///
/// | key | default | meaning |
/// |---|---|---|
/// | `dataset` | `data` | directory with one subdirectory per mesh |
/// | `out` | `run` | output directory |
/// | `steps` | 2000 | training steps |
/// | `checkpoint_interval` | 500 | steps between checkpoints; 0 keeps only the final one |
/// | `precision` | `f64` | numeric width; only `f64` is implemented |
/// | `variant` | `ggan` | generator: `ggan` or `gcn` |
/// | `encoder_layers` | 3 | GCN encoder depth |
/// | `encoder_width` | 64 | encoder hidden width |
/// | `generator_width` | 64 | generator hidden width |
/// | `noise_dim` | 16 | noise dimension |
/// | `disc_layers` | 4 | stride-2 discriminator convolutions |
/// | `disc_channels` | 32 | channels of the first discriminator layer |
/// | `image_size` | 64 | render side length in pixels |
/// | `lambda` | 0.1 | perceptual loss weight |
/// | `lr` | 0.0001 | Adam learning rate for all networks |
/// | `loss` | `adversarial` | `adversarial` or `reconstruction` |
/// | `views` | 8 | cameras in the view ring |
/// | `elevation` | 20 | camera elevation, degrees |
/// | `distance` | 2.2 | camera distance from the origin |
/// | `fov` | 45 | vertical field of view, degrees |
/// | `shading` | `unlit` | `unlit` or `lambertian` |
/// | `light` | `0.5,1,0.75` | direction toward the light |
/// | `ambient` | 0.3 | ambient term of Lambertian shading |
/// | `background` | `1,1,1` | background color |
/// | `seed` | 0 | seed for initialization, sampling and evaluation noise |
/// | `diversity_draws` | 5 | noise draws for the diversity score |
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub steps: u64,
    pub checkpoint_interval: u64,
    pub precision: String,
    pub shading: ShadingMode,
    pub light: Vec3,
    pub ambient: f64,
    pub diversity_draws: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadingMode {
    Unlit,
    Lambertian,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            out: PathBuf::from("run"),
            steps: 2000,
            checkpoint_interval: 500,
            precision: "f64".into(),
            shading: ShadingMode::Unlit,
            light: DEFAULT_LIGHT,
            ambient: DEFAULT_AMBIENT,
            diversity_draws: 5,
            train: TrainConfig::default(),
        }
    }
}

/// Accepted keys in the order they are written.
pub const KEYS: &[&str] = &[
    "dataset",
    "out",
    "steps",
    "checkpoint_interval",
    "precision",
    "variant",
    "encoder_layers",
    "encoder_width",
    "generator_width",
    "noise_dim",
    "disc_layers",
    "disc_channels",
    "image_size",
    "lambda",
    "lr",
    "loss",
    "views",
    "elevation",
    "distance",
    "fov",
    "shading",
    "light",
    "ambient",
    "background",
    "seed",
    "diversity_draws",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Usage(format!("{key}: cannot parse `{value}`")))
}

fn triple(key: &str, value: &str) -> Result<[f64; 3], HarnessError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(HarnessError::Usage(format!(
            "{key}: expected three comma-separated numbers"
        )));
    }
    Ok([
        num(key, parts[0])?,
        num(key, parts[1])?,
        num(key, parts[2])?,
    ])
}

fn show_triple(v: [f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let t = &mut self.train;
        let m = &mut t.model;
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "steps" => self.steps = num(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "precision" => self.precision = value.to_string(),
            "variant" => {
                m.variant = GeneratorVariant::parse(value)
                    .ok_or_else(|| HarnessError::Usage(format!("variant: unknown `{value}`")))?
            }
            "encoder_layers" => m.encoder_layers = num(key, value)?,
            "encoder_width" => m.encoder_width = num(key, value)?,
            "generator_width" => m.generator_width = num(key, value)?,
            "noise_dim" => m.noise_dim = num(key, value)?,
            "disc_layers" => m.disc_layers = num(key, value)?,
            "disc_channels" => m.disc_channels = num(key, value)?,
            "image_size" => m.image_size = num(key, value)?,
            "lambda" => t.lambda = num(key, value)?,
            "lr" => t.lr = num(key, value)?,
            "loss" => {
                t.loss = LossMode::parse(value)
                    .ok_or_else(|| HarnessError::Usage(format!("loss: unknown `{value}`")))?
            }
            "views" => t.views = num(key, value)?,
            "elevation" => t.elevation = num(key, value)?,
            "distance" => t.distance = num(key, value)?,
            "fov" => t.fov = num(key, value)?,
            "shading" => {
                self.shading = match value {
                    "unlit" => ShadingMode::Unlit,
                    "lambertian" => ShadingMode::Lambertian,
                    _ => return Err(HarnessError::Usage(format!("shading: unknown `{value}`"))),
                }
            }
            "light" => self.light = triple(key, value)?,
            "ambient" => self.ambient = num(key, value)?,
            "background" => t.background = triple(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "diversity_draws" => self.diversity_draws = num(key, value)?,
            _ => return Err(HarnessError::Usage(format!("unknown config key `{key}`"))),
        }
        self.sync_shading();
        Ok(())
    }

    /// Text form of one key's value.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let m = &t.model;
        Some(match key {
            "dataset" => self.dataset.display().to_string(),
            "out" => self.out.display().to_string(),
            "steps" => self.steps.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "precision" => self.precision.clone(),
            "variant" => m.variant.name().to_string(),
            "encoder_layers" => m.encoder_layers.to_string(),
            "encoder_width" => m.encoder_width.to_string(),
            "generator_width" => m.generator_width.to_string(),
            "noise_dim" => m.noise_dim.to_string(),
            "disc_layers" => m.disc_layers.to_string(),
            "disc_channels" => m.disc_channels.to_string(),
            "image_size" => m.image_size.to_string(),
            "lambda" => t.lambda.to_string(),
            "lr" => t.lr.to_string(),
            "loss" => t.loss.name().to_string(),
            "views" => t.views.to_string(),
            "elevation" => t.elevation.to_string(),
            "distance" => t.distance.to_string(),
            "fov" => t.fov.to_string(),
            "shading" => match self.shading {
                ShadingMode::Unlit => "unlit".to_string(),
                ShadingMode::Lambertian => "lambertian".to_string(),
            },
            "light" => show_triple(self.light),
            "ambient" => self.ambient.to_string(),
            "background" => show_triple(t.background),
            "seed" => t.seed.to_string(),
            "diversity_draws" => self.diversity_draws.to_string(),
            _ => return None,
        })
    }

    fn sync_shading(&mut self) {
        self.train.shading = match self.shading {
            ShadingMode::Unlit => Shading::Unlit,
            ShadingMode::Lambertian => Shading::Lambertian {
                light: self.light,
                ambient: self.ambient,
            },
        };
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped; unknown or repeated keys are
    /// errors.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Usage(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(HarnessError::Usage(format!(
                    "config line {}: `{key}` repeated",
                    n + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| HarnessError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its resolved value; [`RunConfig::parse`] reads it
    /// back to an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.precision != "f64" {
            return Err(HarnessError::Usage(format!(
                "precision `{}` is not supported; only f64 is implemented",
                self.precision
            )));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(HarnessError::Usage("ambient must lie in [0, 1]".into()));
        }
        if self.diversity_draws < 2 {
            return Err(HarnessError::Usage(
                "diversity_draws must be at least 2".into(),
            ));
        }
        self.train
            .validate()
            .map_err(|e| HarnessError::Usage(e.to_string()))
    }
}
