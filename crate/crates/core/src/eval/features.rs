use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::EvalError;
use crate::engine::{checkpoint, init, Activation, EngineError, ParamStore, Tape, Tensor, Var};

/// Seed of the default extractor weights. Changing it changes every score.
pub const FEATURE_SEED: u64 = 0x6D65_7368_7465_7866;
pub const FEATURE_DIM: usize = 64;
const CHANNELS: [usize; 4] = [3, 16, 32, 64];
const KERNEL: usize = 4;
/// Smallest image side that survives three stride-2 layers.
pub const MIN_IMAGE_SIDE: usize = 8;

/// Fixed convolutional encoder: three stride-2 4×4 convolutions with
/// leaky ReLU, then global average pooling to a 64-d vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub params: ParamStore,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::seeded(FEATURE_SEED)
    }
}

impl FeatureExtractor {
    /// He-normal kernels drawn from `seed`, zero biases.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (i, w) in CHANNELS.windows(2).enumerate() {
            let fan_in = w[0] * KERNEL * KERNEL;
            let std = (2.0 / fan_in as f64).sqrt();
            params.push(
                format!("feat.{i}.w"),
                init::normal(&[w[1], w[0], KERNEL, KERNEL], std, &mut rng),
            );
            params.push(format!("feat.{i}.b"), Tensor::zeros(vec![w[1]]));
        }
        Self { params }
    }

    pub fn zeros() -> Self {
        let mut e = Self::seeded(0);
        e.params.fill(0.0);
        e
    }

    /// Loads weights saved in the checkpoint format under the names
    /// `feat.{i}.w` / `feat.{i}.b`, e.g. converted pretrained kernels.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let mut e = Self::seeded(0);
        e.params.load_from(&checkpoint::load(path)?)?;
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let entries: Vec<(String, Tensor)> = self
            .params
            .entries()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        checkpoint::save(path, &entries)?;
        Ok(())
    }

    pub fn check_image(image: &Tensor) -> Result<(), EvalError> {
        match image.shape() {
            [3, h, w] if *h >= MIN_IMAGE_SIDE && *w >= MIN_IMAGE_SIDE => Ok(()),
            s => Err(EvalError::ImageShape(s.to_vec())),
        }
    }

    /// Records the extractor on `tape`; `vars` come from binding
    /// `self.params`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], image: Var) -> Result<Var, EngineError> {
        let mut h = image;
        for layer in vars.chunks(2) {
            h = tape.conv2d(h, layer[0], 2, 1)?;
            h = tape.add_channel_bias(h, layer[1])?;
            h = tape.activation(h, Activation::LEAKY)?;
        }
        tape.global_avg_pool(h)
    }

    pub fn extract(&self, image: &Tensor) -> Result<Vec<f64>, EvalError> {
        Self::check_image(image)?;
        let mut tape = Tape::new();
        let vars = self.params.bind_constant(&mut tape);
        let x = tape.constant(image.clone());
        let out = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// One feature row per image, extracted in parallel.
pub fn extract_features(
    extractor: &FeatureExtractor,
    images: &[Tensor],
) -> Result<Tensor, EvalError> {
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| extractor.extract(img))
        .collect::<Result<_, _>>()?;
    let data = rows.concat();
    Ok(Tensor::new(vec![images.len(), FEATURE_DIM], data)?)
}
