use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorVariant, ModelConfig, ModelError, GENERATOR_LAYERS};
use crate::engine::{init, Activation, EngineError, ParamStore, Tape, Tensor, Var};
use crate::graph::{build_face_adjacency, normalize_adjacency, NormalizedAdjacency, NODE_FEATURES};
use crate::mesh::Mesh;

const DISC_KERNEL: usize = 4;
const CONV_INIT_STD: f64 = 0.02;
const NORM_EPS: f64 = 1e-5;

/// Graph-side inputs of the generator for one mesh.
#[derive(Debug, Clone)]
pub struct GraphInput {
    /// `F × 6` centroid and normal rows.
    pub features: Tensor,
    pub adj: Arc<NormalizedAdjacency>,
}

impl GraphInput {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let graph = build_face_adjacency(mesh);
        let adj = Arc::new(normalize_adjacency(&graph));
        Self {
            features: graph.node_features,
            adj,
        }
    }

    pub fn num_faces(&self) -> usize {
        self.adj.num_nodes
    }
}

fn dense(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var, EngineError> {
    let y = tape.matmul(h, w)?;
    tape.add_row_bias(y, b)
}

fn graph_layer(
    tape: &mut Tape,
    adj: &Arc<NormalizedAdjacency>,
    h: Var,
    w: Var,
    b: Var,
) -> Result<Var, EngineError> {
    let y = tape.gcn_conv(adj, h, w)?;
    tape.add_row_bias(y, b)
}

fn push_dense(
    params: &mut ParamStore,
    name: String,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) {
    params.push(
        format!("{name}.w"),
        init::glorot_uniform(fan_in, fan_out, rng),
    );
    params.push(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
}

/// Stacked graph convolutions `h ← leaky(Â h W + b)` producing the latent
/// part representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub params: ParamStore,
}

impl Encoder {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamStore::new();
        let mut fan_in = NODE_FEATURES;
        for i in 0..config.encoder_layers {
            push_dense(
                &mut params,
                format!("enc.{i}"),
                fan_in,
                config.encoder_width,
                rng,
            );
            fan_in = config.encoder_width;
        }
        Self { params }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: &Arc<NormalizedAdjacency>,
        features: Var,
    ) -> Result<Var, EngineError> {
        let mut h = features;
        for layer in vars.chunks(2) {
            h = graph_layer(tape, adj, h, layer[0], layer[1])?;
            h = tape.activation(h, Activation::LEAKY)?;
        }
        Ok(h)
    }
}

/// Maps latent rows with appended noise to per-face colors in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub variant: GeneratorVariant,
    pub params: ParamStore,
}

impl Generator {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamStore::new();
        let w = config.generator_width;
        for i in 0..GENERATOR_LAYERS {
            let fan_in = if i == 0 {
                config.encoder_width + config.noise_dim
            } else {
                w
            };
            let fan_out = if i == GENERATOR_LAYERS - 1 { 3 } else { w };
            push_dense(&mut params, format!("gen.{i}"), fan_in, fan_out, rng);
        }
        Self {
            variant: config.variant,
            params,
        }
    }

    /// `input` is the `F × (latent + d)` concatenation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: &Arc<NormalizedAdjacency>,
        input: Var,
    ) -> Result<Var, EngineError> {
        let layer = |i: usize| (vars[2 * i], vars[2 * i + 1]);
        let act = Activation::LEAKY;
        let last = GENERATOR_LAYERS - 1;
        let out = match self.variant {
            GeneratorVariant::Ggan => {
                let (w, b) = layer(0);
                let y = dense(tape, input, w, b)?;
                let mut h = tape.activation(y, act)?;
                // two residual blocks of two layers each
                for first in [1, 3] {
                    let (wa, ba) = layer(first);
                    let (wb, bb) = layer(first + 1);
                    let t = dense(tape, h, wa, ba)?;
                    let t = tape.activation(t, act)?;
                    let t = dense(tape, t, wb, bb)?;
                    let t = tape.activation(t, act)?;
                    h = tape.add(h, t)?;
                }
                let (w, b) = layer(5);
                let y = dense(tape, h, w, b)?;
                let h = tape.activation(y, act)?;
                let (w, b) = layer(last);
                dense(tape, h, w, b)?
            }
            GeneratorVariant::Gcn => {
                let mut h = input;
                for i in 0..last {
                    let (w, b) = layer(i);
                    let y = graph_layer(tape, adj, h, w, b)?;
                    h = tape.activation(y, act)?;
                }
                let (w, b) = layer(last);
                graph_layer(tape, adj, h, w, b)?
            }
        };
        tape.activation(out, Activation::Sigmoid)
    }
}

/// Strided 4×4 convolutions with leaky ReLU, instance normalization after
/// every layer but the first, and a dense layer to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub params: ParamStore,
}

impl Discriminator {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamStore::new();
        let mut c_in = 3;
        let mut side = config.image_size;
        for i in 0..config.disc_layers {
            let c_out = config.disc_channels << i;
            params.push(
                format!("disc.{i}.w"),
                init::normal(&[c_out, c_in, DISC_KERNEL, DISC_KERNEL], CONV_INIT_STD, rng),
            );
            // normalized layers need no bias
            if i == 0 {
                params.push("disc.0.b", Tensor::zeros(vec![c_out]));
            }
            c_in = c_out;
            side /= 2;
        }
        push_dense(&mut params, "disc.fc".into(), c_in * side * side, 1, rng);
        Self { params }
    }

    /// Logit of shape `[1]` for a `3 × S × S` image.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], image: Var) -> Result<Var, EngineError> {
        let mut h = tape.conv2d(image, vars[0], 2, 1)?;
        h = tape.add_channel_bias(h, vars[1])?;
        h = tape.activation(h, Activation::LEAKY)?;
        let convs = vars.len() - 4;
        for &k in &vars[2..2 + convs] {
            h = tape.conv2d(h, k, 2, 1)?;
            h = tape.instance_norm(h, NORM_EPS)?;
            h = tape.activation(h, Activation::LEAKY)?;
        }
        let n = tape.value(h).len();
        let flat = tape.reshape(h, vec![1, n])?;
        let logit = dense(tape, flat, vars[vars.len() - 2], vars[vars.len() - 1])?;
        tape.reshape(logit, vec![1])
    }
}

/// All three networks with their shared configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

/// Variables of the encoder and generator bound on a tape.
pub(super) struct GeneratorVars {
    pub encoder: Vec<Var>,
    pub generator: Vec<Var>,
    pub colors: Var,
}

impl Model {
    /// Glorot-uniform dense and graph weights, normal(0.02) convolution
    /// kernels, zero biases; drawn from `seed` in a fixed order.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config, &mut rng);
        let generator = Generator::new(&config, &mut rng);
        let discriminator = Discriminator::new(&config, &mut rng);
        Ok(Self {
            config,
            encoder,
            generator,
            discriminator,
        })
    }

    pub fn stores(&self) -> [&ParamStore; 3] {
        [
            &self.encoder.params,
            &self.generator.params,
            &self.discriminator.params,
        ]
    }

    pub fn stores_mut(&mut self) -> [&mut ParamStore; 3] {
        [
            &mut self.encoder.params,
            &mut self.generator.params,
            &mut self.discriminator.params,
        ]
    }

    fn check_noise(&self, z: &[f64]) -> Result<(), EngineError> {
        if z.len() != self.config.noise_dim {
            return Err(EngineError::ShapeMismatch {
                op: "generate",
                detail: format!(
                    "noise of length {}, expected {}",
                    z.len(),
                    self.config.noise_dim
                ),
            });
        }
        Ok(())
    }

    /// Records encoder and generator; `trainable` selects parameter or
    /// constant leaves.
    pub(super) fn generator_on_tape(
        &self,
        tape: &mut Tape,
        input: &GraphInput,
        z: &[f64],
        trainable: bool,
    ) -> Result<GeneratorVars, EngineError> {
        self.check_noise(z)?;
        let bind = |store: &ParamStore, tape: &mut Tape| {
            if trainable {
                store.bind(tape)
            } else {
                store.bind_constant(tape)
            }
        };
        let encoder = bind(&self.encoder.params, tape);
        let generator = bind(&self.generator.params, tape);
        let x = tape.constant(input.features.clone());
        let latent = self.encoder.forward(tape, &encoder, &input.adj, x)?;
        let noise = tape.constant(Tensor::vector(z.to_vec()));
        let joined = tape.concat_noise(latent, noise)?;
        let colors = self
            .generator
            .forward(tape, &generator, &input.adj, joined)?;
        Ok(GeneratorVars {
            encoder,
            generator,
            colors,
        })
    }

    /// `F × encoder_width` latent part representation.
    pub fn encode_parts(&self, input: &GraphInput) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = self.encoder.params.bind_constant(&mut tape);
        let x = tape.constant(input.features.clone());
        let out = self.encoder.forward(&mut tape, &vars, &input.adj, x)?;
        Ok(tape.value(out).clone())
    }

    /// `F × 3` colors from a latent matrix and a noise vector. The
    /// adjacency is used only by the graph-convolution variant.
    pub fn generate_texture(
        &self,
        latent: &Tensor,
        z: &[f64],
        adj: &Arc<NormalizedAdjacency>,
    ) -> Result<Tensor, ModelError> {
        self.check_noise(z)?;
        let mut tape = Tape::new();
        let vars = self.generator.params.bind_constant(&mut tape);
        let h = tape.constant(super::replicate_concat(z, latent)?);
        let out = self.generator.forward(&mut tape, &vars, adj, h)?;
        Ok(tape.value(out).clone())
    }

    /// Encoder followed by generator.
    pub fn generate(&self, input: &GraphInput, z: &[f64]) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = self.generator_on_tape(&mut tape, input, z, false)?;
        Ok(tape.value(vars.colors).clone())
    }

    pub fn discriminate(&self, image: &Tensor) -> Result<f64, ModelError> {
        let s = self.config.image_size;
        if image.shape() != [3, s, s] {
            return Err(ModelError::Data(format!(
                "discriminator expects 3×{s}×{s}, got {:?}",
                image.shape()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.discriminator.params.bind_constant(&mut tape);
        let x = tape.constant(image.clone());
        let out = self.discriminator.forward(&mut tape, &vars, x)?;
        Ok(tape.value(out).item())
    }

    /// Mean pairwise per-face color distance over `k` noise draws.
    pub fn diversity_score(
        &self,
        input: &GraphInput,
        k: usize,
        seed: u64,
    ) -> Result<f64, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let textures = (0..k)
            .map(|_| {
                let z = super::sample_noise(self.config.noise_dim, &mut rng);
                self.generate(input, &z)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(crate::eval::diversity(&textures)?)
    }
}
