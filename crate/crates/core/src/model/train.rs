use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    sample_noise, GeneratorVariant, GraphInput, LossMode, Model, ModelConfig, ModelError,
    TrainConfig,
};
use crate::engine::{AdamConfig, AdamState, EngineError, ParamStore, Tape, Tensor, Var};
use crate::eval::FeatureExtractor;
use crate::mesh::Mesh;
use crate::render::{self, Raster};

pub const METRICS_HEADER: &str = "step,loss_D,loss_G,perc,D_real,D_fake";

/// Scalars logged after every step. `perc` is the unweighted perceptual
/// term; in reconstruction mode the discriminator columns are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub perc: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.loss_d, self.loss_g, self.perc, self.d_real, self.d_fake
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.loss_d,
            self.loss_g,
            self.perc,
            self.d_real,
            self.d_fake,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// One training mesh with everything that stays fixed during training:
/// graph inputs, visibility per view, and the real renders and their
/// perceptual features.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub mesh: Mesh,
    pub input: GraphInput,
    /// Ground-truth `F × 3` colors.
    pub target: Tensor,
    pub rasters: Vec<Arc<Raster>>,
    pub factors: Arc<Vec<f64>>,
    pub real_images: Vec<Tensor>,
    pub real_features: Vec<Tensor>,
}

impl Sample {
    pub fn prepare(
        name: impl Into<String>,
        mesh: Mesh,
        target: Tensor,
        config: &TrainConfig,
        extractor: &FeatureExtractor,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if target.shape() != [mesh.num_faces(), 3] {
            return Err(ModelError::Data(format!(
                "{name}: {} faces but colors of shape {:?}",
                mesh.num_faces(),
                target.shape()
            )));
        }
        if target.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::Data(format!("{name}: colors outside [0, 1]")));
        }
        let cams = render::make_view_ring(&config.ring())?;
        let rasters = render::rasterize_views(&mesh, &cams);
        let factors = Arc::new(render::face_shade_factors(&mesh, &config.shading));
        let real_images = rasters
            .iter()
            .map(|r| render::shade_flat(r, &target, &factors, config.background))
            .collect::<Result<Vec<_>, _>>()?;
        let real_features = real_images
            .par_iter()
            .map(|img| extractor.extract(img).map(Tensor::vector))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name,
            input: GraphInput::from_mesh(&mesh),
            mesh,
            target,
            rasters,
            factors,
            real_images,
            real_features,
        })
    }
}

/// Adversarial and perceptual losses over paired views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub loss_d: f64,
    pub loss_g: f64,
    pub perc: f64,
}

/// `loss_D = mean_v [bce(D(real_v), 1) + bce(D(fake_v), 0)]` and the
/// non-saturating `loss_G = mean_v bce(D(fake_v), 1) + λ · perc`, where
/// `perc` is the mean squared distance between paired feature vectors.
pub fn compute_losses(
    model: &Model,
    real_images: &[Tensor],
    fake_images: &[Tensor],
    features_real: &[Vec<f64>],
    features_fake: &[Vec<f64>],
    lambda: f64,
) -> Result<Losses, ModelError> {
    let n = real_images.len();
    if n == 0 || fake_images.len() != n || features_real.len() != n || features_fake.len() != n {
        return Err(ModelError::Data("real and fake views must pair up".into()));
    }
    let bce = |z: f64, t: f64| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
    let (mut loss_d, mut adv, mut perc) = (0.0, 0.0, 0.0);
    for v in 0..n {
        let zr = model.discriminate(&real_images[v])?;
        let zf = model.discriminate(&fake_images[v])?;
        loss_d += bce(zr, 1.0) + bce(zf, 0.0);
        adv += bce(zf, 1.0);
        let (a, b) = (&features_real[v], &features_fake[v]);
        if a.len() != b.len() {
            return Err(ModelError::Data("feature lengths differ".into()));
        }
        perc +=
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64;
    }
    let n = n as f64;
    Ok(Losses {
        loss_d: loss_d / n,
        loss_g: adv / n + lambda * perc / n,
        perc: perc / n,
    })
}

struct DiscView {
    loss: f64,
    real: f64,
    fake: f64,
    grads: Vec<Tensor>,
}

struct GenView {
    loss: f64,
    perc: f64,
    grad_colors: Tensor,
}

fn take_grads(
    grads: &mut crate::engine::Gradients,
    vars: &[Var],
    store: &ParamStore,
) -> Vec<Tensor> {
    vars.iter()
        .zip(store.tensors())
        .map(|(v, t)| {
            grads
                .take(*v)
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect()
}

/// Ordered mean of per-view gradient lists.
fn mean_grads(parts: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let n = parts.len() as f64;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one view");
    for part in iter {
        for (a, p) in acc.iter_mut().zip(&part) {
            a.add_assign(p);
        }
    }
    for a in &mut acc {
        a.scale_in_place(1.0 / n);
    }
    acc
}

/// Seeds a per-step RNG stream so any step can be replayed on its own.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Adversarial trainer owning the model, optimizer state and data.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub extractor: FeatureExtractor,
    pub samples: Vec<Sample>,
    /// Encoder, generator and discriminator optimizers.
    pub optimizers: [AdamState; 3],
    /// Completed steps.
    pub step: u64,
}

impl Trainer {
    /// Builds the model from `config.seed` and prepares every
    /// `(name, mesh, colors)` item with the default feature extractor.
    pub fn new(config: TrainConfig, data: Vec<(String, Mesh, Tensor)>) -> Result<Self, ModelError> {
        Self::with_extractor(config, data, FeatureExtractor::default())
    }

    pub fn with_extractor(
        config: TrainConfig,
        data: Vec<(String, Mesh, Tensor)>,
        extractor: FeatureExtractor,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if data.is_empty() {
            return Err(ModelError::Data("no training meshes".into()));
        }
        let model = Model::new(config.model, config.seed)?;
        let samples = data
            .into_iter()
            .map(|(name, mesh, colors)| Sample::prepare(name, mesh, colors, &config, &extractor))
            .collect::<Result<Vec<_>, _>>()?;
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let optimizers = model.stores().map(|s| AdamState::new(adam, s.tensors()));
        Ok(Self {
            config,
            model,
            extractor,
            samples,
            optimizers,
            step: 0,
        })
    }

    /// Mesh index and noise vector used by step `step`.
    pub fn step_inputs(&self, step: u64) -> (usize, Vec<f64>) {
        let mut rng = step_rng(self.config.seed, step);
        let index = rng.random_range(0..self.samples.len());
        (index, sample_noise(self.config.model.noise_dim, &mut rng))
    }

    fn disc_view(
        &self,
        sample: &Sample,
        view: usize,
        colors: &Tensor,
    ) -> Result<DiscView, EngineError> {
        let d = &self.model.discriminator;
        let mut tape = Tape::new();
        let vars = d.params.bind(&mut tape);
        let fake = render::shade_flat(
            &sample.rasters[view],
            colors,
            &sample.factors,
            self.config.background,
        )
        .map_err(|e| EngineError::ShapeMismatch {
            op: "shade_flat",
            detail: e.to_string(),
        })?;
        let real = tape.constant(sample.real_images[view].clone());
        let fake = tape.constant(fake);
        let zr = d.forward(&mut tape, &vars, real)?;
        let zf = d.forward(&mut tape, &vars, fake)?;
        let lr = tape.bce_with_logits(zr, &[1.0])?;
        let lf = tape.bce_with_logits(zf, &[0.0])?;
        let loss = tape.add(lr, lf)?;
        let mut grads = tape.backward(loss)?;
        Ok(DiscView {
            loss: tape.value(loss).item(),
            real: crate::engine::sigmoid(tape.value(zr).item()),
            fake: crate::engine::sigmoid(tape.value(zf).item()),
            grads: take_grads(&mut grads, &vars, &d.params),
        })
    }

    fn gen_view(
        &self,
        sample: &Sample,
        view: usize,
        colors: &Tensor,
    ) -> Result<GenView, EngineError> {
        let mut tape = Tape::new();
        let c = tape.param(colors.clone());
        let img = render::shade_flat_var(
            &mut tape,
            c,
            &sample.rasters[view],
            &sample.factors,
            self.config.background,
        )?;
        let (loss, perc) = match self.config.loss {
            LossMode::Reconstruction => {
                let real = tape.constant(sample.real_images[view].clone());
                (tape.mse(img, real)?, None)
            }
            LossMode::Adversarial => {
                let dv = self.model.discriminator.params.bind_constant(&mut tape);
                let logit = self.model.discriminator.forward(&mut tape, &dv, img)?;
                let adv = tape.bce_with_logits(logit, &[1.0])?;
                let fv = self.extractor.params.bind_constant(&mut tape);
                let feat = self.extractor.forward(&mut tape, &fv, img)?;
                let real = tape.constant(sample.real_features[view].clone());
                let perc = tape.mse(feat, real)?;
                let weighted = tape.scale(perc, self.config.lambda)?;
                (tape.add(adv, weighted)?, Some(perc))
            }
        };
        let mut grads = tape.backward(loss)?;
        Ok(GenView {
            loss: tape.value(loss).item(),
            perc: perc.map_or(0.0, |p| tape.value(p).item()),
            grad_colors: grads
                .take(c)
                .unwrap_or_else(|| Tensor::zeros(colors.shape().to_vec())),
        })
    }

    fn gen_views(&self, sample: &Sample, colors: &Tensor) -> Result<Vec<GenView>, EngineError> {
        (0..sample.rasters.len())
            .into_par_iter()
            .map(|v| self.gen_view(sample, v, colors))
            .collect()
    }

    /// Generator objective for one mesh and noise vector, averaged over
    /// views: `(loss_G, perc)`.
    pub fn generator_loss(&self, sample: usize, z: &[f64]) -> Result<(f64, f64), ModelError> {
        let s = &self.samples[sample];
        let colors = self.model.generate(&s.input, z)?;
        let views = self.gen_views(s, &colors)?;
        let n = views.len() as f64;
        Ok((
            views.iter().map(|v| v.loss).sum::<f64>() / n,
            views.iter().map(|v| v.perc).sum::<f64>() / n,
        ))
    }

    /// Generator objective with its gradients for the encoder and the
    /// generator parameters.
    pub fn generator_gradients(
        &self,
        sample: usize,
        z: &[f64],
    ) -> Result<(f64, f64, Vec<Tensor>, Vec<Tensor>), ModelError> {
        let s = &self.samples[sample];
        let mut tape = Tape::new();
        let vars = self.model.generator_on_tape(&mut tape, &s.input, z, true)?;
        let colors = tape.value(vars.colors).clone();
        let views = self.gen_views(s, &colors)?;
        let n = views.len() as f64;
        let mut seed = Tensor::zeros(colors.shape().to_vec());
        for v in &views {
            seed.add_assign(&v.grad_colors);
        }
        seed.scale_in_place(1.0 / n);
        let mut grads = tape.backward_with(vars.colors, seed)?;
        let enc = take_grads(&mut grads, &vars.encoder, &self.model.encoder.params);
        let gen = take_grads(&mut grads, &vars.generator, &self.model.generator.params);
        Ok((
            views.iter().map(|v| v.loss).sum::<f64>() / n,
            views.iter().map(|v| v.perc).sum::<f64>() / n,
            enc,
            gen,
        ))
    }

    /// One discriminator update followed by one encoder and generator
    /// update, each over every view of one mesh.
    pub fn train_step(&mut self) -> Result<StepMetrics, ModelError> {
        let step = self.step;
        let nonfinite = |e: ModelError| match e {
            ModelError::Engine(source @ EngineError::NonFinite { .. }) => {
                ModelError::NonFinite { step, source }
            }
            other => other,
        };
        let (index, z) = self.step_inputs(step);
        let mut metrics = StepMetrics {
            step,
            loss_d: 0.0,
            loss_g: 0.0,
            perc: 0.0,
            d_real: 0.0,
            d_fake: 0.0,
        };

        if self.config.loss == LossMode::Adversarial {
            let sample = &self.samples[index];
            let colors = self.model.generate(&sample.input, &z).map_err(nonfinite)?;
            let views: Vec<DiscView> = (0..sample.rasters.len())
                .into_par_iter()
                .map(|v| self.disc_view(sample, v, &colors))
                .collect::<Result<_, _>>()
                .map_err(|e| nonfinite(e.into()))?;
            let n = views.len() as f64;
            metrics.loss_d = views.iter().map(|v| v.loss).sum::<f64>() / n;
            metrics.d_real = views.iter().map(|v| v.real).sum::<f64>() / n;
            metrics.d_fake = views.iter().map(|v| v.fake).sum::<f64>() / n;
            let grads = mean_grads(views.into_iter().map(|v| v.grads).collect());
            self.optimizers[2].step(self.model.discriminator.params.tensors_mut(), &grads)?;
        }

        let (loss_g, perc, enc, gen) = self.generator_gradients(index, &z).map_err(nonfinite)?;
        metrics.loss_g = loss_g;
        metrics.perc = perc;
        self.optimizers[0].step(self.model.encoder.params.tensors_mut(), &enc)?;
        self.optimizers[1].step(self.model.generator.params.tensors_mut(), &gen)?;

        if !metrics.is_finite() {
            return Err(ModelError::NonFinite {
                step,
                source: EngineError::NonFinite { op: "metrics" },
            });
        }
        self.step += 1;
        Ok(metrics)
    }

    /// Parameters, optimizer moments and metadata as named tensors.
    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor)> {
        let mut out = self.model.checkpoint_entries(self.config.seed, self.step);
        for (store, (opt, tag)) in self
            .model
            .stores()
            .iter()
            .zip(self.optimizers.iter().zip(STORE_TAGS))
        {
            out.push((format!("adam.{tag}.t"), Tensor::scalar(opt.t as f64)));
            for (i, name) in store.names().iter().enumerate() {
                out.push((format!("adam.m.{name}"), opt.m[i].clone()));
                out.push((format!("adam.v.{name}"), opt.v[i].clone()));
            }
        }
        out
    }

    /// Restores parameters, optimizer state and the step counter written by
    /// [`Trainer::checkpoint_entries`].
    pub fn load_checkpoint_entries(
        &mut self,
        entries: &[(String, Tensor)],
    ) -> Result<(), ModelError> {
        let (model, _seed, step) = Model::from_checkpoint(entries)?;
        if model.config != self.model.config {
            return Err(ModelError::Config(
                "checkpoint was written for another model size".into(),
            ));
        }
        let find = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| ModelError::Data(format!("checkpoint lacks `{name}`")))
        };
        for (i, tag) in STORE_TAGS.iter().enumerate() {
            let store = model.stores()[i];
            let opt = &mut self.optimizers[i];
            opt.t = find(&format!("adam.{tag}.t"))?.item() as u64;
            for (j, name) in store.names().iter().enumerate() {
                opt.m[j] = find(&format!("adam.m.{name}"))?;
                opt.v[j] = find(&format!("adam.v.{name}"))?;
            }
        }
        self.model = model;
        self.step = step;
        Ok(())
    }
}

const STORE_TAGS: [&str; 3] = ["enc", "gen", "disc"];

impl Model {
    /// Network parameters plus `meta.*` entries describing the model.
    pub fn checkpoint_entries(&self, seed: u64, step: u64) -> Vec<(String, Tensor)> {
        let c = &self.config;
        let mut out = vec![
            (
                "meta.seed".to_string(),
                Tensor::vector(vec![(seed & 0xffff_ffff) as f64, (seed >> 32) as f64]),
            ),
            ("meta.step".to_string(), Tensor::scalar(step as f64)),
            (
                "meta.variant".to_string(),
                Tensor::scalar(match c.variant {
                    GeneratorVariant::Ggan => 0.0,
                    GeneratorVariant::Gcn => 1.0,
                }),
            ),
            (
                "meta.model".to_string(),
                Tensor::vector(
                    [
                        c.encoder_layers,
                        c.encoder_width,
                        c.generator_width,
                        c.noise_dim,
                        c.disc_layers,
                        c.disc_channels,
                        c.image_size,
                    ]
                    .map(|v| v as f64)
                    .to_vec(),
                ),
            ),
        ];
        for store in self.stores() {
            out.extend(store.entries().map(|(n, t)| (n.to_string(), t.clone())));
        }
        out
    }

    /// Rebuilds a model from checkpoint entries; returns it with the seed
    /// and step recorded alongside.
    pub fn from_checkpoint(entries: &[(String, Tensor)]) -> Result<(Model, u64, u64), ModelError> {
        let get = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| ModelError::Data(format!("checkpoint lacks `{name}`")))
        };
        let seed = get("meta.seed")?;
        if seed.len() != 2 {
            return Err(ModelError::Data("meta.seed must hold two halves".into()));
        }
        let seed = seed.data()[0] as u64 | ((seed.data()[1] as u64) << 32);
        let step = get("meta.step")?.item() as u64;
        let variant = match get("meta.variant")?.item() {
            0.0 => GeneratorVariant::Ggan,
            1.0 => GeneratorVariant::Gcn,
            v => return Err(ModelError::Data(format!("unknown generator variant {v}"))),
        };
        let dims = get("meta.model")?;
        if dims.len() != 7 {
            return Err(ModelError::Data("meta.model must hold 7 sizes".into()));
        }
        let d: Vec<usize> = dims.data().iter().map(|&v| v as usize).collect();
        let config = ModelConfig {
            variant,
            encoder_layers: d[0],
            encoder_width: d[1],
            generator_width: d[2],
            noise_dim: d[3],
            disc_layers: d[4],
            disc_channels: d[5],
            image_size: d[6],
        };
        let mut model = Model::new(config, 0)?;
        for store in model.stores_mut() {
            store.load_from(entries)?;
        }
        Ok((model, seed, step))
    }
}
