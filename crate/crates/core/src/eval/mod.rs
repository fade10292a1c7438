//! Texture quality scores: a multi-view Fréchet distance over features of
//! rendered images, and a noise-diversity measure.

mod features;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{EngineError, Tensor};
use crate::mesh::Mesh;
use crate::render::{self, RenderError, Shading, ViewRing};

pub use features::{extract_features, FeatureExtractor, FEATURE_DIM, FEATURE_SEED, MIN_IMAGE_SIDE};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("image shape {0:?}: expected 3×H×W with H, W ≥ {MIN_IMAGE_SIDE}")]
    ImageShape(Vec<usize>),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("covariance matrix is not symmetric")]
    NotSymmetric,
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Mean and covariance of a feature cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (divisor `N − 1`) covariance of the rows of
/// an `N × D` matrix.
pub fn fit_gaussian(features: &Tensor) -> Result<GaussianStats, EvalError> {
    let (n, d) = features
        .dims2()
        .ok_or_else(|| EvalError::Input(format!("features of shape {:?}", features.shape())))?;
    if n < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got: n });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features.at(i, j) - mean[j]);
    let mut cov = centered.transpose() * &centered;
    cov /= (n - 1) as f64;
    // exact symmetry regardless of summation order
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-9 * scale
}

/// Eigenvalues below this fraction of the largest one are rounding noise
/// and are treated as zero. Without the cutoff a zero eigenvalue computed
/// as 1e-16 would contribute its square root, 1e-8, to the distance.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// Square roots of the eigenvalues, clamped at zero below the cutoff.
fn clamped_roots(eigenvalues: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let floor = EIGEN_CUTOFF * eigenvalues.max().max(0.0);
    eigenvalues.map(|l| if l > floor { l.sqrt() } else { 0.0 })
}

/// Symmetric positive-semidefinite square root.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = clamped_roots(&eig.eigenvalues);
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2 (Σ₁Σ₂)^{1/2})`.
///
/// The trace of the cross term is the sum of singular values of
/// `Σ₁^{1/2} Σ₂^{1/2}`: they are the square roots of the eigenvalues of
/// `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which shares its spectrum with `Σ₁Σ₂`. Taking
/// singular values avoids squaring the spectrum, which would push true
/// eigenvalues below the rounding floor. Square roots use the clamping of
/// [`EIGEN_CUTOFF`]; the result is clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, EvalError> {
    if a.dim() != b.dim() || a.cov.nrows() != a.dim() || b.cov.nrows() != b.dim() {
        return Err(EvalError::Dimension(a.dim(), b.dim()));
    }
    if !is_symmetric(&a.cov) || !is_symmetric(&b.cov) {
        return Err(EvalError::NotSymmetric);
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let product = psd_sqrt(&a.cov) * psd_sqrt(&b.cov);
    let cross = product.singular_values().sum();
    let fd = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}

/// Options shared by the multi-view scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FidOptions {
    pub ring: ViewRing,
    pub shading: Shading,
    pub background: [f64; 3],
    /// Also score every mesh on its own views.
    pub per_mesh: bool,
}

impl Default for FidOptions {
    fn default() -> Self {
        Self {
            ring: ViewRing::default(),
            shading: Shading::Unlit,
            background: [1.0; 3],
            per_mesh: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidReport {
    /// All views of all meshes pooled into one Gaussian per side.
    pub pooled: f64,
    /// Per-mesh distances, present when requested.
    pub per_mesh: Option<Vec<f64>>,
}

/// Renders `mesh` with `colors` from every camera of `ring`.
pub fn render_ring(
    mesh: &Mesh,
    colors: &Tensor,
    opts: &FidOptions,
) -> Result<Vec<Tensor>, EvalError> {
    let cams = render::make_view_ring(&opts.ring)?;
    let factors = render::face_shade_factors(mesh, &opts.shading);
    render::rasterize_views(mesh, &cams)
        .iter()
        .map(|r| Ok(render::shade_flat(r, colors, &factors, opts.background)?))
        .collect()
}

/// Fréchet distance between features of `real` and `fake` textures
/// rendered around the view ring.
pub fn multiview_fid(
    meshes: &[Mesh],
    real: &[Tensor],
    fake: &[Tensor],
    extractor: &FeatureExtractor,
    opts: &FidOptions,
) -> Result<FidReport, EvalError> {
    if meshes.len() != real.len() || meshes.len() != fake.len() {
        return Err(EvalError::Input(format!(
            "{} meshes, {} real textures, {} generated textures",
            meshes.len(),
            real.len(),
            fake.len()
        )));
    }
    let total = meshes.len() * opts.ring.count;
    if total < 2 {
        return Err(EvalError::TooFewSamples {
            needed: 2,
            got: total,
        });
    }
    if opts.per_mesh && opts.ring.count < 2 {
        return Err(EvalError::TooFewSamples {
            needed: 2,
            got: opts.ring.count,
        });
    }
    let per_mesh_features = |textures: &[Tensor]| -> Result<Vec<Tensor>, EvalError> {
        meshes
            .par_iter()
            .zip(textures)
            .map(|(m, t)| extract_features(extractor, &render_ring(m, t, opts)?))
            .collect()
    };
    let fr = per_mesh_features(real)?;
    let ff = per_mesh_features(fake)?;
    let stack = |parts: &[Tensor]| {
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        Tensor::new(vec![total, FEATURE_DIM], data).expect("shape")
    };
    let pooled = frechet_distance(&fit_gaussian(&stack(&fr))?, &fit_gaussian(&stack(&ff))?)?;
    let per_mesh = if opts.per_mesh {
        Some(
            fr.iter()
                .zip(&ff)
                .map(|(a, b)| frechet_distance(&fit_gaussian(a)?, &fit_gaussian(b)?))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };
    Ok(FidReport { pooled, per_mesh })
}

/// Mean over all texture pairs of the mean absolute per-face, per-channel
/// color difference.
pub fn diversity(textures: &[Tensor]) -> Result<f64, EvalError> {
    let k = textures.len();
    if k < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got: k });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&textures[i], &textures[j]);
            if a.shape() != b.shape() {
                return Err(EvalError::Input(format!(
                    "texture shapes {:?} and {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let d: f64 = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y).abs())
                .sum();
            total += d / a.len().max(1) as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
