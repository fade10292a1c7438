//! Finite-difference self-checks run by the `grad-check` command.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::{gradcheck, Activation, EngineError, Tape, Tensor, Var};
use crate::graph::{build_face_adjacency, normalize_adjacency};
use crate::mesh::normalize_mesh;
use crate::model::{GeneratorVariant, ModelConfig, ModelError, TrainConfig, Trainer};
use crate::render::{self, Shading};
use crate::{dataset, shapes};

pub const ENGINE_TOLERANCE: f64 = 1e-5;
pub const RENDER_TOLERANCE: f64 = 1e-10;
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    EngineOps,
    Renderer,
    EndToEnd,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::EngineOps, Suite::Renderer, Suite::EndToEnd];

    pub fn name(self) -> &'static str {
        match self {
            Suite::EngineOps => "engine-ops",
            Suite::Renderer => "renderer",
            Suite::EndToEnd => "end-to-end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Suite::EngineOps => ENGINE_TOLERANCE,
            Suite::Renderer => RENDER_TOLERANCE,
            Suite::EndToEnd => END_TO_END_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub max_error: f64,
    /// Name of the case with the largest error.
    pub worst: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.suite.tolerance()
    }

    /// One report line: name, verdict, worst error and tolerance.
    pub fn line(&self) -> String {
        format!(
            "{:<11} {} max_rel_err={:.3e} tol={:.0e} cases={} worst={}",
            self.suite.name(),
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_error,
            self.suite.tolerance(),
            self.cases,
            self.worst
        )
    }
}

/// Identity whose backward rule returns the negated gradient. Inserted
/// into a suite on request to show that the suite catches a wrong rule.
fn sign_flip(tape: &mut Tape, x: Var) -> Result<Var, EngineError> {
    let value = tape.value(x).clone();
    tape.custom("sign_flip", &[x], value, Box::new(|g| vec![g.map(|v| -v)]))
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("matching length")
}

/// Fixed random weighted sum, so every output element gets its own weight.
fn project(tape: &mut Tape, x: Var, seed: u64) -> Result<Var, EngineError> {
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).len();
    let w = tape.constant(random(&shape, &mut ChaCha8Rng::seed_from_u64(seed)));
    let a = tape.reshape(x, vec![1, n])?;
    let b = tape.reshape(w, vec![n, 1])?;
    let s = tape.matmul(a, b)?;
    tape.sum(s)
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, EngineError>>;

struct Case {
    name: &'static str,
    inputs: Vec<Tensor>,
    build: Build,
}

fn engine_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    let mut add = |name: &'static str, inputs: Vec<Tensor>, build: Build| {
        cases.push(Case {
            name,
            inputs,
            build,
        })
    };
    add(
        "matmul",
        vec![random(&[3, 4], rng), random(&[4, 2], rng)],
        Box::new(|t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y, 1)
        }),
    );
    add(
        "add",
        vec![random(&[2, 3], rng), random(&[2, 3], rng)],
        Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, 2)
        }),
    );
    add(
        "add_row_bias",
        vec![random(&[4, 3], rng), random(&[3], rng)],
        Box::new(|t, v| {
            let y = t.add_row_bias(v[0], v[1])?;
            project(t, y, 3)
        }),
    );
    add(
        "add_channel_bias",
        vec![random(&[2, 3, 3], rng), random(&[2], rng)],
        Box::new(|t, v| {
            let y = t.add_channel_bias(v[0], v[1])?;
            project(t, y, 4)
        }),
    );
    add(
        "scale",
        vec![random(&[5], rng)],
        Box::new(|t, v| {
            let y = t.scale(v[0], -1.7)?;
            project(t, y, 5)
        }),
    );
    for (name, kind) in [
        ("leaky_relu", Activation::LEAKY),
        ("relu", Activation::Relu),
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
    ] {
        add(
            name,
            vec![random(&[12], rng)],
            Box::new(move |t, v| {
                let y = t.activation(v[0], kind)?;
                project(t, y, 6)
            }),
        );
    }
    for (name, k, stride, pad) in [("conv2d_k4s2", 4, 2, 1), ("conv2d_k3s1", 3, 1, 1)] {
        add(
            name,
            vec![random(&[2, 6, 6], rng), random(&[3, 2, k, k], rng)],
            Box::new(move |t, v| {
                let y = t.conv2d(v[0], v[1], stride, pad)?;
                project(t, y, 7)
            }),
        );
    }
    add(
        "instance_norm",
        vec![random(&[2, 4, 4], rng)],
        Box::new(|t, v| {
            let y = t.instance_norm(v[0], 1e-5)?;
            project(t, y, 8)
        }),
    );
    let adj = Arc::new(normalize_adjacency(&build_face_adjacency(&normalize_mesh(
        &shapes::octahedron(),
    ))));
    let a = adj.clone();
    add(
        "spmm",
        vec![random(&[8, 3], rng)],
        Box::new(move |t, v| {
            let y = t.spmm(&a, v[0])?;
            project(t, y, 9)
        }),
    );
    add(
        "gcn_conv",
        vec![random(&[8, 3], rng), random(&[3, 2], rng)],
        Box::new(move |t, v| {
            let y = t.gcn_conv(&adj, v[0], v[1])?;
            project(t, y, 10)
        }),
    );
    add(
        "concat_noise",
        vec![random(&[3, 2], rng), random(&[2], rng)],
        Box::new(|t, v| {
            let y = t.concat_noise(v[0], v[1])?;
            project(t, y, 11)
        }),
    );
    add(
        "global_avg_pool",
        vec![random(&[3, 4, 5], rng)],
        Box::new(|t, v| {
            let y = t.global_avg_pool(v[0])?;
            project(t, y, 12)
        }),
    );
    add(
        "mean",
        vec![random(&[2, 5], rng)],
        Box::new(|t, v| {
            let y = t.activation(v[0], Activation::Tanh)?;
            t.mean(y)
        }),
    );
    add(
        "mse",
        vec![random(&[2, 3], rng), random(&[2, 3], rng)],
        Box::new(|t, v| t.mse(v[0], v[1])),
    );
    add(
        "bce_with_logits",
        vec![random(&[4], rng).map(|x| 3.0 * x)],
        Box::new(|t, v| t.bce_with_logits(v[0], &[1.0, 0.0, 0.3, 1.0])),
    );
    cases
}

fn run_cases(
    suite: Suite,
    cases: Vec<Case>,
    h: f64,
    flip: bool,
) -> Result<SuiteReport, EngineError> {
    let mut report = SuiteReport {
        suite,
        cases: cases.len(),
        max_error: 0.0,
        worst: String::new(),
    };
    for (i, case) in cases.into_iter().enumerate() {
        let build = &case.build;
        // the flip wraps the first input of the first case
        let err = if flip && i == 0 {
            gradcheck::check(&case.inputs, h, |t: &mut Tape, v: &[Var]| {
                let mut v = v.to_vec();
                v[0] = sign_flip(t, v[0])?;
                build(t, &v)
            })?
        } else {
            gradcheck::check(&case.inputs, h, build)?
        };
        if err >= report.max_error {
            report.max_error = err;
            report.worst = case.name.to_string();
        }
    }
    Ok(report)
}

/// Every differentiable engine op against central differences.
pub fn engine_suite(flip: bool) -> Result<SuiteReport, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    run_cases(Suite::EngineOps, engine_cases(&mut rng), 1e-6, flip)
}

/// The color scatter-add of the flat shader, unlit and Lambertian, on
/// ring views of an icosphere.
pub fn renderer_suite(flip: bool) -> Result<SuiteReport, EngineError> {
    let mesh = normalize_mesh(&shapes::icosphere(1));
    let ring = render::ViewRing {
        count: 3,
        image_size: 16,
        ..render::ViewRing::default()
    };
    let cams = render::make_view_ring(&ring).map_err(|e| EngineError::Format(e.to_string()))?;
    let rasters = render::rasterize_views(&mesh, &cams);
    let colors = dataset::random_colors(mesh.num_faces(), 7);
    let mut cases = Vec::new();
    for (name, shading) in [
        ("unlit", Shading::Unlit),
        ("lambertian", Shading::lambertian()),
    ] {
        let factors = Arc::new(render::face_shade_factors(&mesh, &shading));
        for raster in &rasters {
            let (raster, factors) = (raster.clone(), factors.clone());
            cases.push(Case {
                name,
                inputs: vec![colors.clone()],
                build: Box::new(move |t, v| {
                    let img = render::shade_flat_var(t, v[0], &raster, &factors, [0.2, 0.4, 0.6])?;
                    project(t, img, 13)
                }),
            });
        }
    }
    // the image is linear in the colors, so a large step has no truncation
    // error and keeps rounding error small
    run_cases(Suite::Renderer, cases, 1e-2, flip)
}

/// The tiny training instance used by the end-to-end check: a tetrahedron,
/// 8×8 renders from four views and two-wide layers.
pub fn tiny_trainer() -> Result<Trainer, ModelError> {
    let config = TrainConfig {
        model: ModelConfig {
            variant: GeneratorVariant::Ggan,
            encoder_layers: 3,
            encoder_width: 2,
            generator_width: 2,
            noise_dim: 2,
            disc_layers: 2,
            disc_channels: 2,
            image_size: 8,
        },
        views: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let mesh = normalize_mesh(&shapes::tetrahedron());
    let colors = dataset::structured_colors(&mesh);
    let mut trainer = Trainer::new(config, vec![("tetrahedron".into(), mesh, colors)])?;
    // Zero biases on a tetrahedron put every encoder pre-activation on the
    // leaky-ReLU kink; move to a generic point.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for store in trainer.model.stores_mut() {
        for p in store.tensors_mut() {
            for v in p.data_mut() {
                *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(trainer)
}

/// Gradient of the generator loss with respect to all encoder and generator
/// parameters, through renderer, discriminator and feature extractor.
pub fn end_to_end_suite(flip: bool) -> Result<SuiteReport, ModelError> {
    let trainer = tiny_trainer()?;
    let z = [0.3, -0.8];
    let (_, _, enc, gen) = trainer.generator_gradients(0, &z)?;
    let sign = if flip { -1.0 } else { 1.0 };
    let analytic: Vec<f64> = enc
        .iter()
        .chain(&gen)
        .flat_map(|g| g.data().iter().map(move |v| sign * v))
        .collect();
    let h = 1e-5;
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = trainer.clone();
    for store in 0..2 {
        for p in 0..trainer.model.stores()[store].len() {
            for i in 0..trainer.model.stores()[store].tensors()[p].len() {
                let x0 = trainer.model.stores()[store].tensors()[p].data()[i];
                let mut eval = |x: f64| -> Result<f64, ModelError> {
                    work.model.stores_mut()[store].tensors_mut()[p].data_mut()[i] = x;
                    Ok(work.generator_loss(0, &z)?.0)
                };
                let d = (eval(x0 + h)? - eval(x0 - h)?) / (2.0 * h);
                eval(x0)?;
                numeric.push(d);
            }
        }
    }
    Ok(SuiteReport {
        suite: Suite::EndToEnd,
        cases: analytic.len(),
        max_error: gradcheck::relative_error(&analytic, &numeric),
        worst: "generator+encoder".into(),
    })
}

/// Runs all suites; `flip` names a suite whose backward path gets a sign
/// error injected.
pub fn run_suites(flip: Option<Suite>) -> Result<Vec<SuiteReport>, ModelError> {
    Ok(vec![
        engine_suite(flip == Some(Suite::EngineOps))?,
        renderer_suite(flip == Some(Suite::Renderer))?,
        end_to_end_suite(flip == Some(Suite::EndToEnd))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_and_catch_sign_flips() {
        for report in run_suites(None).unwrap() {
            assert!(report.passed(), "{}", report.line());
        }
        for suite in Suite::ALL {
            let reports = run_suites(Some(suite)).unwrap();
            for r in reports {
                assert_eq!(r.passed(), r.suite != suite, "{}", r.line());
            }
        }
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
        assert_eq!(Suite::parse("x"), None);
    }
}
