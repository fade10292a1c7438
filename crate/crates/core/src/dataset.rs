//! On-disk training sets: one directory per mesh holding `mesh.obj` and a
//! binary `facecolors.bin`, plus a procedural toy set.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::Tensor;
use crate::mesh::{self, Mesh, MeshError};
use crate::shapes;

pub const MESH_FILE: &str = "mesh.obj";
pub const COLORS_FILE: &str = "facecolors.bin";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{0}")]
    Format(String),
    #[error("dataset {0} holds no meshes")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `u32` face count, then `F × 3` little-endian `f64` values.
pub fn encode_facecolors(colors: &Tensor) -> Result<Vec<u8>, DatasetError> {
    let f = match colors.dims2() {
        Some((f, 3)) => f,
        _ => {
            return Err(DatasetError::Format(format!(
                "colors must be F×3, got {:?}",
                colors.shape()
            )))
        }
    };
    let count = u32::try_from(f).map_err(|_| DatasetError::Format("too many faces".into()))?;
    let mut out = Vec::with_capacity(4 + 24 * f);
    out.extend_from_slice(&count.to_le_bytes());
    for v in colors.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_facecolors`]. Values must lie in `[0, 1]`.
pub fn decode_facecolors(bytes: &[u8]) -> Result<Tensor, DatasetError> {
    let header: [u8; 4] = bytes
        .get(..4)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| DatasetError::Format("facecolors header truncated".into()))?;
    let f = u32::from_le_bytes(header) as usize;
    let body = &bytes[4..];
    if body.len() != f * 24 {
        return Err(DatasetError::Format(format!(
            "facecolors declares {f} faces but holds {} bytes of data",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(DatasetError::Format(format!(
            "color value {v} outside [0, 1]"
        )));
    }
    Tensor::new(vec![f, 3], data).map_err(|e| DatasetError::Format(e.to_string()))
}

pub fn read_facecolors(path: &Path) -> Result<Tensor, DatasetError> {
    decode_facecolors(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_facecolors(path: &Path, colors: &Tensor) -> Result<(), DatasetError> {
    fs::write(path, encode_facecolors(colors)?).map_err(io_err(path))
}

/// Reads, validates and normalizes an OBJ file.
pub fn read_mesh(path: &Path) -> Result<Mesh, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (mesh, _) = mesh::load_obj(&bytes).map_err(|source| DatasetError::Mesh {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(mesh)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub name: String,
    /// Validated and normalized.
    pub mesh: Mesh,
    /// `F × 3` ground-truth colors.
    pub colors: Tensor,
}

/// Loads every subdirectory of `dir` in name order. The mesh is validated
/// before its face count is compared with the colors, so OBJ files with
/// degenerate or duplicate faces must ship colors for the cleaned mesh.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetItem>, DatasetError> {
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_dir() {
            subdirs.push(entry.path());
        }
    }
    subdirs.sort();
    let mut items = Vec::with_capacity(subdirs.len());
    for sub in subdirs {
        let name = sub
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mesh = read_mesh(&sub.join(MESH_FILE))?;
        let colors = read_facecolors(&sub.join(COLORS_FILE))?;
        if colors.shape()[0] != mesh.num_faces() {
            return Err(DatasetError::Format(format!(
                "{name}: mesh has {} faces after validation, colors cover {}",
                mesh.num_faces(),
                colors.shape()[0]
            )));
        }
        items.push(DatasetItem { name, mesh, colors });
    }
    if items.is_empty() {
        return Err(DatasetError::Empty(dir.to_path_buf()));
    }
    Ok(items)
}

/// Writes items in the layout read by [`load_dataset`].
pub fn write_dataset(dir: &Path, items: &[DatasetItem]) -> Result<(), DatasetError> {
    for item in items {
        let sub = dir.join(&item.name);
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let obj = sub.join(MESH_FILE);
        fs::write(&obj, item.mesh.to_obj()).map_err(io_err(&obj))?;
        write_facecolors(&sub.join(COLORS_FILE), &item.colors)?;
    }
    Ok(())
}

const PALETTE: [[f64; 3]; 6] = [
    [0.85, 0.20, 0.15],
    [0.15, 0.55, 0.85],
    [0.95, 0.80, 0.20],
    [0.20, 0.70, 0.30],
    [0.60, 0.30, 0.75],
    [0.90, 0.55, 0.25],
];

/// Colors faces by the dominant axis and sign of their normal, darkened
/// toward the bottom of the mesh: a part-like texture that the face
/// features can in principle predict.
pub fn structured_colors(mesh: &Mesh) -> Tensor {
    let mesh = if mesh.has_geometry() {
        mesh.clone()
    } else {
        mesh::compute_face_geometry(mesh)
    };
    let rows: Vec<Vec<f64>> = mesh
        .face_normals
        .iter()
        .zip(&mesh.face_centroids)
        .map(|(n, c)| {
            let axis = (0..3)
                .max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
                .expect("three axes");
            let part = 2 * axis + usize::from(n[axis] < 0.0);
            let shade = 0.8 + 0.2 * c[1].clamp(-1.0, 1.0);
            PALETTE[part].iter().map(|v| v * shade).collect()
        })
        .collect();
    Tensor::from_rows(&rows).expect("rows of three")
}

/// Uniform random colors in `[0, 1)`.
pub fn random_colors(faces: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(
        vec![faces, 3],
        (0..faces * 3).map(|_| rng.random()).collect(),
    )
    .expect("matching length")
}

/// Three small normalized meshes with [`structured_colors`]: a subdivided
/// box, a level-1 icosphere and an octahedron.
pub fn toy_dataset() -> Vec<DatasetItem> {
    [
        ("box", shapes::grid_box([1.0, 0.6, 1.4], [2, 2, 2])),
        ("icosphere", shapes::icosphere(1)),
        ("octahedron", shapes::octahedron()),
    ]
    .into_iter()
    .map(|(name, m)| {
        let mesh = mesh::normalize_mesh(&m);
        DatasetItem {
            name: name.to_string(),
            colors: structured_colors(&mesh),
            mesh,
        }
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facecolors_round_trip() {
        let c = random_colors(7, 1);
        let bytes = encode_facecolors(&c).unwrap();
        assert_eq!(bytes.len(), 4 + 7 * 24);
        assert_eq!(&bytes[..4], &7u32.to_le_bytes());
        assert_eq!(decode_facecolors(&bytes).unwrap(), c);
    }

    #[test]
    fn facecolors_rejects_bad_input() {
        let bytes = encode_facecolors(&random_colors(2, 1)).unwrap();
        assert!(decode_facecolors(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_facecolors(&bytes[..2]).is_err());
        let mut out_of_range = bytes.clone();
        out_of_range[4..12].copy_from_slice(&1.5f64.to_le_bytes());
        assert!(decode_facecolors(&out_of_range).is_err());
        assert!(encode_facecolors(&Tensor::zeros(vec![2, 4])).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let items = toy_dataset();
        write_dataset(dir.path(), &items).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let names: Vec<_> = loaded.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["box", "icosphere", "octahedron"]);
        for (a, b) in items.iter().zip(&loaded) {
            assert_eq!(a.colors, b.colors);
            assert_eq!(a.mesh.faces, b.mesh.faces);
        }
    }

    #[test]
    fn dataset_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::Empty(_))
        ));
        assert!(load_dataset(&dir.path().join("missing")).is_err());
        let items = toy_dataset();
        write_dataset(dir.path(), &items[2..]).unwrap();
        write_facecolors(
            &dir.path().join("octahedron").join(COLORS_FILE),
            &random_colors(3, 0),
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::Format(_))
        ));
        fs::write(
            dir.path().join("octahedron").join(MESH_FILE),
            "v 0 0 0\nf 1 2 3\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DatasetError::Mesh { .. })
        ));
    }

    #[test]
    fn toy_colors_are_structured() {
        for item in toy_dataset() {
            assert_eq!(item.colors.shape(), &[item.mesh.num_faces(), 3]);
            assert!(item.colors.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let distinct: std::collections::BTreeSet<Vec<u64>> = (0..item.mesh.num_faces())
                .map(|i| item.colors.row(i).iter().map(|v| v.to_bits()).collect())
                .collect();
            assert!(distinct.len() > 1, "{}", item.name);
        }
    }
}
