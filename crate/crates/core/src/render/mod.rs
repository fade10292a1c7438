//! Hard rasterizer for per-face colored meshes.
//!
//! Geometry is fixed during training, so visibility is resolved once per
//! camera into a face-index buffer. A rendered pixel is then a linear
//! function of one face's color and its gradient is an exact scatter-add.

mod image;
mod shade;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::mesh::Mesh;

pub use image::{
    encode_png, encode_ppm, read_buffer_dump, to_bytes, write_buffer_dump, write_image, ImageFormat,
};
pub use shade::{
    face_shade_factors, render_backward, shade_flat, shade_flat_var, Shading, DEFAULT_AMBIENT,
    DEFAULT_LIGHT,
};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("face index {index} out of range for {faces} colors")]
    FaceIndex { index: usize, faces: usize },
    #[error("image shape {0:?} is not 3×H×W")]
    ImageShape(Vec<usize>),
    #[error("buffer dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pinhole camera, y-up, looking from `eye` toward `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    right: Vec3,
    true_up: Vec3,
    forward: Vec3,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self, RenderError> {
        let forward = geom::normalize(geom::sub(target, eye))
            .ok_or_else(|| RenderError::Camera("eye coincides with target".into()))?;
        let right = geom::normalize(geom::cross(forward, up))
            .ok_or_else(|| RenderError::Camera("up is parallel to the view direction".into()))?;
        if !(near > 0.0 && near < far) {
            return Err(RenderError::Camera(format!(
                "need 0 < near < far, got {near}, {far}"
            )));
        }
        if !(fov_y > 0.0 && fov_y < 180.0) {
            return Err(RenderError::Camera(format!("field of view {fov_y}")));
        }
        if width == 0 || height == 0 {
            return Err(RenderError::Camera("empty image".into()));
        }
        Ok(Self {
            eye,
            target,
            up,
            fov_y,
            width,
            height,
            near,
            far,
            right,
            true_up: geom::cross(right, forward),
            forward,
        })
    }

    /// Orthonormal camera frame `(right, up, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        (self.right, self.true_up, self.forward)
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    pub fn tan_half_fov(&self) -> f64 {
        (self.fov_y.to_radians() / 2.0).tan()
    }

    /// View-space coordinates; `z` is the distance along the view axis.
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let d = geom::sub(p, self.eye);
        [
            geom::dot(d, self.right),
            geom::dot(d, self.true_up),
            geom::dot(d, self.forward),
        ]
    }

    /// NDC position of pixel `(row, col)`'s center.
    pub fn pixel_ndc(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) / self.width as f64 * 2.0 - 1.0,
            1.0 - (row as f64 + 0.5) / self.height as f64 * 2.0,
        )
    }
}

/// Camera placement shared by every view of a ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRing {
    pub count: usize,
    /// Degrees above the horizontal plane.
    pub elevation: f64,
    pub distance: f64,
    pub fov_y: f64,
    pub image_size: usize,
}

impl Default for ViewRing {
    fn default() -> Self {
        Self {
            count: 8,
            elevation: 20.0,
            distance: 2.2,
            fov_y: 45.0,
            image_size: 64,
        }
    }
}

pub const NEAR: f64 = 0.05;
pub const FAR: f64 = 100.0;

/// Cameras at azimuths `360k/n` degrees around the vertical axis, all
/// aimed at the origin. Azimuth 0 looks down the −z axis from `+z`.
pub fn make_view_ring(ring: &ViewRing) -> Result<Vec<Camera>, RenderError> {
    if ring.count == 0 {
        return Err(RenderError::Camera(
            "view ring needs at least one view".into(),
        ));
    }
    let el = ring.elevation.to_radians();
    (0..ring.count)
        .map(|k| {
            let az = (360.0 * k as f64 / ring.count as f64).to_radians();
            let eye = [
                ring.distance * el.cos() * az.sin(),
                ring.distance * el.sin(),
                ring.distance * el.cos() * az.cos(),
            ];
            Camera::new(
                eye,
                [0.0; 3],
                [0.0, 1.0, 0.0],
                ring.fov_y,
                ring.image_size,
                ring.image_size,
                NEAR,
                FAR,
            )
        })
        .collect()
}

/// Visibility buffers for one camera, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Visible face per pixel, −1 for background.
    pub face_index: Vec<i32>,
    /// View-space depth per pixel, `far` for background.
    pub depth: Vec<f64>,
}

impl Raster {
    pub fn covered(&self) -> usize {
        self.face_index.iter().filter(|&&f| f >= 0).count()
    }

    /// Number of pixels owned by each face.
    pub fn coverage(&self, num_faces: usize) -> Vec<usize> {
        let mut out = vec![0; num_faces];
        for &f in &self.face_index {
            if f >= 0 {
                out[f as usize] += 1;
            }
        }
        out
    }
}

/// Rasterization plus a shaded image.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffers {
    pub raster: Raster,
    /// Planar `3 × H × W` colors.
    pub image: crate::engine::Tensor,
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Nearest front-facing triangle per pixel center.
///
/// Triangles with a vertex at or in front of the near plane are skipped
/// rather than clipped. Faces are drawn in index order with a strict depth
/// test, so on exact depth ties the lowest index keeps the pixel.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> Raster {
    let (w, h) = (camera.width, camera.height);
    let mut face_index = vec![-1i32; w * h];
    let mut depth = vec![camera.far; w * h];
    let sx = camera.tan_half_fov() * camera.aspect();
    let sy = camera.tan_half_fov();

    for f in 0..mesh.num_faces() {
        let tri = mesh.triangle(f);
        let v = tri.map(|p| camera.to_view(p));
        if v.iter().any(|p| p[2] <= camera.near) {
            continue;
        }
        let p = v.map(|q| (q[0] / (q[2] * sx), q[1] / (q[2] * sy)));
        let area = edge(p[0], p[1], p[2]);
        if area <= 0.0 {
            continue;
        }
        let inv_z = v.map(|q| 1.0 / q[2]);

        // NDC bounding box to pixel ranges, padded by one pixel; the edge
        // test decides coverage.
        let (xmin, xmax) = (
            p[0].0.min(p[1].0).min(p[2].0),
            p[0].0.max(p[1].0).max(p[2].0),
        );
        let (ymin, ymax) = (
            p[0].1.min(p[1].1).min(p[2].1),
            p[0].1.max(p[1].1).max(p[2].1),
        );
        let to_col = |x: f64| (x + 1.0) / 2.0 * w as f64 - 0.5;
        let to_row = |y: f64| (1.0 - y) / 2.0 * h as f64 - 0.5;
        let c0 = (to_col(xmin).floor() - 1.0).max(0.0);
        let c1 = (to_col(xmax).ceil() + 1.0).min(w as f64 - 1.0);
        let r0 = (to_row(ymax).floor() - 1.0).max(0.0);
        let r1 = (to_row(ymin).ceil() + 1.0).min(h as f64 - 1.0);
        if c0 > c1 || r0 > r1 {
            continue;
        }

        for row in r0 as usize..=r1 as usize {
            for col in c0 as usize..=c1 as usize {
                let q = camera.pixel_ndc(row, col);
                let w0 = edge(p[1], p[2], q);
                let w1 = edge(p[2], p[0], q);
                let w2 = edge(p[0], p[1], q);
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = area / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                let i = row * w + col;
                if z < depth[i] {
                    depth[i] = z;
                    face_index[i] = f as i32;
                }
            }
        }
    }
    Raster {
        width: w,
        height: h,
        face_index,
        depth,
    }
}

/// Rasterizes every camera in parallel; output order follows `cameras`.
pub fn rasterize_views(mesh: &Mesh, cameras: &[Camera]) -> Vec<Arc<Raster>> {
    cameras
        .par_iter()
        .map(|c| Arc::new(rasterize(mesh, c)))
        .collect()
}

/// Rasterizes and shades in one call.
pub fn render(
    mesh: &Mesh,
    camera: &Camera,
    colors: &crate::engine::Tensor,
    shading: &Shading,
    background: [f64; 3],
) -> Result<RenderBuffers, RenderError> {
    let raster = rasterize(mesh, camera);
    let factors = face_shade_factors(mesh, shading);
    let image = shade_flat(&raster, colors, &factors, background)?;
    Ok(RenderBuffers { raster, image })
}
