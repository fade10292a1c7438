//! Triangle meshes: OBJ parsing, validation, per-face geometry and
//! normalization to the unit bounding box.
//!
//! The usual entry point is [`load_obj`], which chains
//! [`parse_obj`] → [`validate_mesh`] → [`normalize_mesh`]. Every step is a
//! pure function, so identical input bytes always yield bit-identical meshes.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::geom::{self, Vec3};

/// Faces with an area below this (model units squared) are dropped by
/// [`validate_mesh`].
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("mesh has no faces left after validation")]
    Empty,
    #[error("input is not valid UTF-8")]
    Encoding,
}

/// A triangle mesh with optional per-face geometry.
///
/// `face_centroids`, `face_normals` and `face_areas` are empty until
/// [`compute_face_geometry`] runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_centroids: Vec<Vec3>,
    pub face_normals: Vec<Vec3>,
    pub face_areas: Vec<f64>,
}

impl Mesh {
    /// Builds an unvalidated mesh without geometry.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            vertices,
            faces,
            ..Default::default()
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn has_geometry(&self) -> bool {
        self.face_centroids.len() == self.faces.len()
            && self.face_normals.len() == self.faces.len()
            && self.face_areas.len() == self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    /// Returns a copy with faces reordered so that new face `i` is old face
    /// `order[i]`. Geometry, if present, is carried along.
    pub fn permute_faces(&self, order: &[usize]) -> Mesh {
        assert_eq!(order.len(), self.faces.len(), "permutation length");
        let mut out = Mesh::new(
            self.vertices.clone(),
            order.iter().map(|&i| self.faces[i]).collect(),
        );
        if self.has_geometry() {
            out.face_centroids = order.iter().map(|&i| self.face_centroids[i]).collect();
            out.face_normals = order.iter().map(|&i| self.face_normals[i]).collect();
            out.face_areas = order.iter().map(|&i| self.face_areas[i]).collect();
        }
        out
    }

    /// Serializes vertices and faces as OBJ text (1-based indices).
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }
}

/// What [`validate_mesh`] removed, as indices into the input face list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub degenerate: Vec<usize>,
    pub duplicates: Vec<usize>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.degenerate.is_empty() && self.duplicates.is_empty()
    }

    pub fn removed(&self) -> usize {
        self.degenerate.len() + self.duplicates.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} degenerate face(s), {} duplicate face(s) removed",
            self.degenerate.len(),
            self.duplicates.len()
        )
    }
}

/// Parses Wavefront OBJ text. Only `v` and `f` records are interpreted;
/// polygons are fan-triangulated around their first vertex.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    // (line, one-based or negative index) per corner, resolved at the end
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *slot = tok.parse::<f64>().map_err(|_| MeshError::Parse {
                        line: line_no,
                        message: format!("bad coordinate `{tok}`"),
                    })?;
                    if !slot.is_finite() {
                        return Err(MeshError::Parse {
                            line: line_no,
                            message: format!("non-finite coordinate `{tok}`"),
                        });
                    }
                }
                vertices.push(xyz);
            }
            Some("f") => {
                let mut corners = Vec::with_capacity(4);
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx = idx_str.parse::<i64>().map_err(|_| MeshError::Parse {
                        line: line_no,
                        message: format!("bad face index `{tok}`"),
                    })?;
                    if idx == 0 {
                        return Err(MeshError::Parse {
                            line: line_no,
                            message: "face indices are 1-based; got 0".into(),
                        });
                    }
                    // negative indices are relative to the vertices read so far
                    let resolved = if idx < 0 {
                        vertices.len() as i64 + idx + 1
                    } else {
                        idx
                    };
                    if resolved < 1 {
                        return Err(MeshError::Parse {
                            line: line_no,
                            message: format!("relative index {idx} before first vertex"),
                        });
                    }
                    corners.push(resolved);
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: format!("face needs at least 3 vertices, got {}", corners.len()),
                    });
                }
                for k in 1..corners.len() - 1 {
                    faces.push((line_no, [corners[0], corners[k], corners[k + 1]]));
                }
            }
            _ => {}
        }
    }

    let count = vertices.len();
    let mut out = Vec::with_capacity(faces.len());
    for (face, (_, idx)) in faces.iter().enumerate() {
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let zero_based = (idx[k] - 1) as usize;
            if zero_based >= count {
                return Err(MeshError::IndexOutOfRange {
                    face,
                    index: zero_based,
                    count,
                });
            }
            tri[k] = zero_based;
        }
        out.push(tri);
    }
    Ok(Mesh::new(vertices, out))
}

fn triangle_area(t: &[Vec3; 3]) -> f64 {
    0.5 * geom::norm(geom::cross(geom::sub(t[1], t[0]), geom::sub(t[2], t[0])))
}

/// Checks vertex indices and removes degenerate and duplicate faces.
///
/// Two faces are duplicates when they use the same three vertices in any
/// order; the first occurrence is kept. The returned mesh carries fresh
/// geometry.
pub fn validate_mesh(mesh: &Mesh) -> Result<(Mesh, ValidationReport), MeshError> {
    let count = mesh.vertices.len();
    for (face, tri) in mesh.faces.iter().enumerate() {
        if let Some(&index) = tri.iter().find(|&&i| i >= count) {
            return Err(MeshError::IndexOutOfRange { face, index, count });
        }
    }

    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(mesh.faces.len());
    for (face, tri) in mesh.faces.iter().enumerate() {
        let area = triangle_area(&[
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ]);
        // written this way so a NaN area also counts as degenerate
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(area >= DEGENERATE_AREA) {
            report.degenerate.push(face);
            continue;
        }
        let mut key = *tri;
        key.sort_unstable();
        if !seen.insert(key) {
            report.duplicates.push(face);
            continue;
        }
        kept.push(*tri);
    }
    if kept.is_empty() {
        return Err(MeshError::Empty);
    }
    let out = compute_face_geometry(&Mesh::new(mesh.vertices.clone(), kept));
    Ok((out, report))
}

/// Fills in centroids, unit normals (counter-clockwise winding faces the
/// viewer) and areas.
pub fn compute_face_geometry(mesh: &Mesh) -> Mesh {
    let mut out = Mesh::new(mesh.vertices.clone(), mesh.faces.clone());
    let n = mesh.faces.len();
    out.face_centroids.reserve(n);
    out.face_normals.reserve(n);
    out.face_areas.reserve(n);
    for f in 0..n {
        let [a, b, c] = mesh.triangle(f);
        out.face_centroids.push([
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ]);
        let cr = geom::cross(geom::sub(b, a), geom::sub(c, a));
        let len = geom::norm(cr);
        out.face_areas.push(0.5 * len);
        out.face_normals
            .push(geom::normalize(cr).unwrap_or([0.0, 0.0, 0.0]));
    }
    out
}

/// Centers the bounding box at the origin and scales its longest side to 1.
/// Returns the applied scale factor alongside the mesh.
pub fn normalize_mesh_with_scale(mesh: &Mesh) -> (Mesh, f64) {
    let (lo, hi) = mesh.bounds();
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let longest = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    let s = if longest > 0.0 { 1.0 / longest } else { 1.0 };
    let vertices = mesh
        .vertices
        .iter()
        .map(|&v| geom::scale(geom::sub(v, center), s))
        .collect();
    let out = compute_face_geometry(&Mesh::new(vertices, mesh.faces.clone()));
    (out, s)
}

pub fn normalize_mesh(mesh: &Mesh) -> Mesh {
    normalize_mesh_with_scale(mesh).0
}

/// Parse, validate and normalize OBJ bytes in one go.
pub fn load_obj(bytes: &[u8]) -> Result<(Mesh, ValidationReport), MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|_| MeshError::Encoding)?;
    let parsed = parse_obj(text)?;
    let (valid, report) = validate_mesh(&parsed)?;
    Ok((normalize_mesh(&valid), report))
}
