use std::sync::Arc;

use super::{Raster, RenderError};
use crate::engine::{EngineError, Tape, Tensor, Var};
use crate::geom::{self, Vec3};
use crate::mesh::{compute_face_geometry, Mesh};

/// Direction toward the light for Lambertian shading, world space;
/// normalized before use.
pub const DEFAULT_LIGHT: Vec3 = [0.5, 1.0, 0.75];
pub const DEFAULT_AMBIENT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shading {
    /// Pixel = face color.
    Unlit,
    /// Pixel = face color · (ambient + (1 − ambient)·clamp(n·l, 0, 1)).
    Lambertian { light: Vec3, ambient: f64 },
}

impl Shading {
    pub fn lambertian() -> Self {
        Shading::Lambertian {
            light: DEFAULT_LIGHT,
            ambient: DEFAULT_AMBIENT,
        }
    }
}

/// Per-face multiplier applied to the face color.
pub fn face_shade_factors(mesh: &Mesh, shading: &Shading) -> Vec<f64> {
    match *shading {
        Shading::Unlit => vec![1.0; mesh.num_faces()],
        Shading::Lambertian { light, ambient } => {
            let l = geom::normalize(light).unwrap_or([0.0, 1.0, 0.0]);
            let owned;
            let m = if mesh.has_geometry() {
                mesh
            } else {
                owned = compute_face_geometry(mesh);
                &owned
            };
            m.face_normals
                .iter()
                .map(|&n| ambient + (1.0 - ambient) * geom::dot(n, l).clamp(0.0, 1.0))
                .collect()
        }
    }
}

/// Fills every covered pixel with its face's color times the face's shade
/// factor. Output is planar `3 × H × W`.
pub fn shade_flat(
    raster: &Raster,
    colors: &Tensor,
    factors: &[f64],
    background: [f64; 3],
) -> Result<Tensor, RenderError> {
    let faces = colors.shape()[0];
    let plane = raster.width * raster.height;
    let mut out = vec![0.0; 3 * plane];
    for (p, &f) in raster.face_index.iter().enumerate() {
        if f < 0 {
            for c in 0..3 {
                out[c * plane + p] = background[c];
            }
            continue;
        }
        let f = f as usize;
        if f >= faces || f >= factors.len() {
            return Err(RenderError::FaceIndex { index: f, faces });
        }
        let row = colors.row(f);
        for c in 0..3 {
            out[c * plane + p] = row[c] * factors[f];
        }
    }
    Ok(Tensor::new(vec![3, raster.height, raster.width], out).expect("shape"))
}

/// Adjoint of [`shade_flat`] with respect to the colors: each pixel's
/// gradient, scaled by its face's shade factor, is added to that face.
pub fn render_backward(
    grad_image: &Tensor,
    raster: &Raster,
    factors: &[f64],
    num_faces: usize,
) -> Tensor {
    let plane = raster.width * raster.height;
    let g = grad_image.data();
    let mut out = vec![0.0; num_faces * 3];
    for (p, &f) in raster.face_index.iter().enumerate() {
        if f < 0 {
            continue;
        }
        let f = f as usize;
        for c in 0..3 {
            out[f * 3 + c] += g[c * plane + p] * factors[f];
        }
    }
    Tensor::new(vec![num_faces, 3], out).expect("shape")
}

/// [`shade_flat`] as a tape operation on an `F × 3` color variable.
pub fn shade_flat_var(
    tape: &mut Tape,
    colors: Var,
    raster: &Arc<Raster>,
    factors: &Arc<Vec<f64>>,
    background: [f64; 3],
) -> Result<Var, EngineError> {
    let value = shade_flat(raster, tape.value(colors), factors, background).map_err(|e| {
        EngineError::ShapeMismatch {
            op: "shade_flat",
            detail: e.to_string(),
        }
    })?;
    let faces = tape.value(colors).shape()[0];
    let (raster, factors) = (Arc::clone(raster), Arc::clone(factors));
    tape.custom(
        "shade_flat",
        &[colors],
        value,
        Box::new(move |g| vec![render_backward(g, &raster, &factors, faces)]),
    )
}
