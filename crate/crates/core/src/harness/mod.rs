//! Batch commands behind the command-line front end. Each returns its
//! results and writes artifacts to files; exit codes come from
//! [`HarnessError::exit_code`].

mod config;
pub mod gradcheck;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{self, DatasetError, DatasetItem};
use crate::engine::{checkpoint, EngineError, Tensor};
use crate::eval::{self, EvalError, FeatureExtractor, FidOptions, FidReport};
use crate::graph::{build_face_adjacency, GraphStats};
use crate::model::{
    sample_noise, GraphInput, Model, ModelError, StepMetrics, Trainer, METRICS_HEADER,
};
use crate::render::{self, ImageFormat, RenderError};

pub use config::{RunConfig, ShadingMode, KEYS};
pub use gradcheck::{Suite, SuiteReport};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const DIVERSITY_FILE: &str = "diversity.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    /// 1 for usage errors, 2 for bad or missing data, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Data(_) => 2,
            HarnessError::Numerical(_) => 3,
        }
    }
}

impl From<DatasetError> for HarnessError {
    fn from(e: DatasetError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => HarnessError::Usage(m),
            e @ ModelError::NonFinite { .. } => HarnessError::Numerical(e.to_string()),
            ModelError::Engine(EngineError::NonFinite { op }) => {
                HarnessError::Numerical(format!("{op}: non-finite value"))
            }
            e => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<EngineError> for HarnessError {
    fn from(e: EngineError) -> Self {
        ModelError::from(e).into()
    }
}

impl From<EvalError> for HarnessError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Engine(e) => e.into(),
            e => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<RenderError> for HarnessError {
    fn from(e: RenderError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io(path))
}

fn fid_options(cfg: &RunConfig, per_mesh: bool) -> FidOptions {
    FidOptions {
        ring: cfg.train.ring(),
        shading: cfg.train.shading,
        background: cfg.train.background,
        per_mesh,
    }
}

pub fn checkpoint_name(step: u64) -> String {
    format!("checkpoint-{step:06}.ckpt")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub metrics: Vec<StepMetrics>,
    /// Diversity score of the final model per training mesh.
    pub diversity: Vec<(String, f64)>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains on `cfg.dataset`, writing into `cfg.out`:
///
/// - `config.txt`, the resolved configuration;
/// - `metrics.csv`, one row per step, appended as training runs;
/// - `checkpoint-NNNNNN.ckpt` every `checkpoint_interval` steps and
///   `final.ckpt` at the end (with `steps = 0` only the latter, holding
///   the initial weights);
/// - `diversity.csv`, the final diversity score per mesh (skipped when
///   `steps = 0`).
///
/// A non-finite loss stops training with a `nonfinite-step-N.ckpt` dump of
/// the current state and a numerical error.
pub fn run_train(
    cfg: &RunConfig,
    mut progress: impl FnMut(&StepMetrics),
) -> Result<TrainSummary, HarnessError> {
    cfg.validate()?;
    let items = dataset::load_dataset(&cfg.dataset)?;
    create_dir(&cfg.out)?;
    let config_path = cfg.out.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_text()).map_err(io(&config_path))?;

    let data = items
        .into_iter()
        .map(|i| (i.name, i.mesh, i.colors))
        .collect();
    let mut trainer = Trainer::new(cfg.train.clone(), data)?;
    let mut summary = TrainSummary {
        metrics: Vec::new(),
        diversity: Vec::new(),
        checkpoints: Vec::new(),
    };
    let save = |trainer: &Trainer, name: &str| -> Result<PathBuf, HarnessError> {
        let path = cfg.out.join(name);
        checkpoint::save(&path, &trainer.checkpoint_entries())?;
        Ok(path)
    };

    if cfg.steps > 0 {
        let metrics_path = cfg.out.join(METRICS_FILE);
        let mut csv = File::create(&metrics_path).map_err(io(&metrics_path))?;
        writeln!(csv, "{METRICS_HEADER}").map_err(io(&metrics_path))?;
        for _ in 0..cfg.steps {
            let m = match trainer.train_step() {
                Ok(m) => m,
                Err(e @ ModelError::NonFinite { .. }) => {
                    let dump = format!("nonfinite-step-{}.ckpt", trainer.step);
                    save(&trainer, &dump)?;
                    return Err(HarnessError::Numerical(format!(
                        "{e}; state written to {}",
                        cfg.out.join(dump).display()
                    )));
                }
                Err(e) => return Err(e.into()),
            };
            writeln!(csv, "{}", m.csv_row()).map_err(io(&metrics_path))?;
            progress(&m);
            summary.metrics.push(m);
            if cfg.checkpoint_interval > 0 && trainer.step % cfg.checkpoint_interval == 0 {
                summary
                    .checkpoints
                    .push(save(&trainer, &checkpoint_name(trainer.step))?);
            }
        }
    }
    summary.checkpoints.push(save(&trainer, FINAL_CHECKPOINT)?);
    if cfg.steps == 0 {
        return Ok(summary);
    }

    let diversity_path = cfg.out.join(DIVERSITY_FILE);
    let mut csv = String::from("mesh,variant,diversity\n");
    for sample in &trainer.samples {
        let d =
            trainer
                .model
                .diversity_score(&sample.input, cfg.diversity_draws, cfg.train.seed)?;
        csv.push_str(&format!(
            "{},{},{d}\n",
            sample.name,
            cfg.train.model.variant.name()
        ));
        summary.diversity.push((sample.name.clone(), d));
    }
    fs::write(&diversity_path, csv).map_err(io(&diversity_path))?;
    Ok(summary)
}

pub fn load_model(path: &Path) -> Result<Model, HarnessError> {
    let entries = checkpoint::load(path)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok(Model::from_checkpoint(&entries)?.0)
}

/// Noise vector drawn from `seed` alone.
pub fn noise_for_seed(dim: usize, seed: u64) -> Vec<f64> {
    sample_noise(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Writes ring renders `view-NN.png` (and `view-NN.buf` face-index dumps
/// when `buffers` is set) into `dir`.
pub fn write_renders(
    mesh: &crate::mesh::Mesh,
    colors: &Tensor,
    cfg: &RunConfig,
    dir: &Path,
    buffers: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let cams = render::make_view_ring(&cfg.train.ring())?;
    let factors = render::face_shade_factors(mesh, &cfg.train.shading);
    let mut written = Vec::new();
    for (i, raster) in render::rasterize_views(mesh, &cams).iter().enumerate() {
        let image = render::shade_flat(raster, colors, &factors, cfg.train.background)?;
        let path = dir.join(format!("view-{i:02}.png"));
        render::write_image(&path, &image, ImageFormat::Png)?;
        written.push(path);
        if buffers {
            let path = dir.join(format!("view-{i:02}.buf"));
            render::write_buffer_dump(&path, raster)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Generates colors for the mesh at `mesh_path` with noise from `seed`
/// and writes them in the facecolors format, plus ring renders when
/// `renders` is given.
pub fn run_generate(
    checkpoint_path: &Path,
    mesh_path: &Path,
    seed: u64,
    out: &Path,
    renders: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Tensor, HarnessError> {
    let model = load_model(checkpoint_path)?;
    let mesh = dataset::read_mesh(mesh_path)?;
    let z = noise_for_seed(model.config.noise_dim, seed);
    let colors = model.generate(&GraphInput::from_mesh(&mesh), &z)?;
    dataset::write_facecolors(out, &colors)?;
    if let Some(dir) = renders {
        write_renders(&mesh, &colors, cfg, dir, false)?;
    }
    Ok(colors)
}

/// Renders a mesh with stored colors around the view ring.
pub fn run_render(
    mesh_path: &Path,
    colors_path: &Path,
    out_dir: &Path,
    buffers: bool,
    cfg: &RunConfig,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mesh = dataset::read_mesh(mesh_path)?;
    let colors = dataset::read_facecolors(colors_path)?;
    if colors.shape()[0] != mesh.num_faces() {
        return Err(HarnessError::Data(format!(
            "mesh has {} faces, colors cover {}",
            mesh.num_faces(),
            colors.shape()[0]
        )));
    }
    write_renders(&mesh, &colors, cfg, out_dir, buffers)
}

/// Where the textures scored against the ground truth come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FakeSource {
    /// The ground truth itself; the score is zero up to rounding.
    Truth,
    /// Uniform random colors.
    Random,
    /// A trained model, one noise draw per mesh.
    Checkpoint(PathBuf),
}

/// Textures for every item: ground truth, a seeded random baseline, or
/// generator output with noise drawn in item order from `seed`.
pub fn fake_textures(
    items: &[DatasetItem],
    source: &FakeSource,
    seed: u64,
) -> Result<Vec<Tensor>, HarnessError> {
    match source {
        FakeSource::Truth => Ok(items.iter().map(|i| i.colors.clone()).collect()),
        FakeSource::Random => Ok(items
            .iter()
            .enumerate()
            .map(|(k, i)| dataset::random_colors(i.mesh.num_faces(), seed.wrapping_add(k as u64)))
            .collect()),
        FakeSource::Checkpoint(path) => {
            let model = load_model(path)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            items
                .iter()
                .map(|i| {
                    let z = sample_noise(model.config.noise_dim, &mut rng);
                    Ok(model.generate(&GraphInput::from_mesh(&i.mesh), &z)?)
                })
                .collect()
        }
    }
}

/// Multi-view FID of `source` against the ground truth of `cfg.dataset`.
/// With `per_mesh_csv` the per-mesh scores are written as `mesh,fid` rows.
pub fn run_eval(
    cfg: &RunConfig,
    source: &FakeSource,
    per_mesh_csv: Option<&Path>,
) -> Result<FidReport, HarnessError> {
    cfg.validate()?;
    let items = dataset::load_dataset(&cfg.dataset)?;
    let fake = fake_textures(&items, source, cfg.train.seed)?;
    let meshes: Vec<_> = items.iter().map(|i| i.mesh.clone()).collect();
    let real: Vec<_> = items.iter().map(|i| i.colors.clone()).collect();
    let report = eval::multiview_fid(
        &meshes,
        &real,
        &fake,
        &FeatureExtractor::default(),
        &fid_options(cfg, per_mesh_csv.is_some()),
    )?;
    if let (Some(path), Some(scores)) = (per_mesh_csv, &report.per_mesh) {
        let mut csv = String::from("mesh,fid\n");
        for (item, s) in items.iter().zip(scores) {
            csv.push_str(&format!("{},{s}\n", item.name));
        }
        fs::write(path, csv).map_err(io(path))?;
    }
    Ok(report)
}

pub fn run_graph_stats(mesh_path: &Path) -> Result<GraphStats, HarnessError> {
    let mesh = dataset::read_mesh(mesh_path)?;
    Ok(build_face_adjacency(&mesh).stats())
}

/// Runs every finite-difference suite. `flip` injects a sign error into
/// one suite's backward path.
pub fn run_gradcheck(flip: Option<Suite>) -> Result<Vec<SuiteReport>, HarnessError> {
    Ok(gradcheck::run_suites(flip)?)
}

#[cfg(test)]
mod tests;
