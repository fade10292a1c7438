//! Procedural test meshes: platonic solids, icospheres and subdivided boxes.
//! All are closed, welded and wound counter-clockwise when seen from outside.

use std::collections::HashMap;

use crate::geom::{self, Vec3};
use crate::mesh::Mesh;

/// Flips faces of a star-shaped mesh around the origin so normals point away
/// from it.
fn orient_outward(vertices: &[Vec3], faces: &mut [[usize; 3]]) {
    for f in faces.iter_mut() {
        let [a, b, c] = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
        let n = geom::cross(geom::sub(b, a), geom::sub(c, a));
        let centroid = geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0);
        if geom::dot(n, centroid) < 0.0 {
            f.swap(1, 2);
        }
    }
}

/// Regular tetrahedron inscribed in the cube `[-1, 1]^3`.
pub fn tetrahedron() -> Mesh {
    let vertices = vec![
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let mut faces = vec![[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
    orient_outward(&vertices, &mut faces);
    Mesh::new(vertices, faces)
}

/// Unit cube centered at the origin, two triangles per side.
pub fn cube() -> Mesh {
    grid_box([1.0, 1.0, 1.0], [1, 1, 1])
}

/// Regular octahedron with vertices on the coordinate axes.
pub fn octahedron() -> Mesh {
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut faces = Vec::new();
    for &x in &[0usize, 1] {
        for &y in &[2usize, 3] {
            for &z in &[4usize, 5] {
                faces.push([x, y, z]);
            }
        }
    }
    orient_outward(&vertices, &mut faces);
    Mesh::new(vertices, faces)
}

/// Regular icosahedron with unit circumradius.
pub fn icosahedron() -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [Vec3; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices: Vec<Vec3> = raw
        .iter()
        .map(|v| geom::normalize(*v).expect("nonzero"))
        .collect();
    let mut faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    orient_outward(&vertices, &mut faces);
    Mesh::new(vertices, faces)
}

/// Icosahedron subdivided `levels` times (20·4^levels faces), projected to
/// the unit sphere.
pub fn icosphere(levels: u32) -> Mesh {
    let base = icosahedron();
    let mut vertices = base.vertices;
    let mut faces = base.faces;
    for _ in 0..levels {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = geom::scale(geom::add(vertices[a], vertices[b]), 0.5);
                vertices.push(geom::normalize(m).expect("nonzero"));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces)
}

/// Axis-aligned box of the given size centered at the origin, each side
/// split into a `cells` grid of quads (two triangles each). Vertices are
/// shared between neighboring sides.
pub fn grid_box(size: [f64; 3], cells: [usize; 3]) -> Mesh {
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut vertex = |p: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            vertices.push([
                (p[0] as f64 / cells[0] as f64 - 0.5) * size[0],
                (p[1] as f64 / cells[1] as f64 - 0.5) * size[1],
                (p[2] as f64 / cells[2] as f64 - 0.5) * size[2],
            ]);
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, cells[axis]] {
            for i in 0..cells[u] {
                for j in 0..cells[v] {
                    let corner = |di: usize, dj: usize| {
                        let mut p = [0usize; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[v] = j + dj;
                        p
                    };
                    let a = vertex(corner(0, 0), &mut vertices);
                    let b = vertex(corner(1, 0), &mut vertices);
                    let c = vertex(corner(1, 1), &mut vertices);
                    let d = vertex(corner(0, 1), &mut vertices);
                    // (u, v, axis) is right-handed, so a→b→c winds around +axis
                    if side == 0 {
                        faces.push([a, c, b]);
                        faces.push([a, d, c]);
                    } else {
                        faces.push([a, b, c]);
                        faces.push([a, c, d]);
                    }
                }
            }
        }
    }
    Mesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::compute_face_geometry;

    fn assert_outward(m: &Mesh) {
        let g = compute_face_geometry(m);
        for (n, c) in g.face_normals.iter().zip(&g.face_centroids) {
            assert!(geom::dot(*n, *c) > 0.0);
        }
    }

    #[test]
    fn face_counts() {
        assert_eq!(tetrahedron().num_faces(), 4);
        assert_eq!(cube().num_faces(), 12);
        assert_eq!(cube().num_vertices(), 8);
        assert_eq!(octahedron().num_faces(), 8);
        assert_eq!(icosahedron().num_faces(), 20);
        assert_eq!(icosphere(2).num_faces(), 320);
        assert_eq!(icosphere(2).num_vertices(), 162);
        let b = grid_box([2.0, 1.0, 1.0], [3, 2, 1]);
        assert_eq!(b.num_faces(), 2 * 2 * (6 + 2 + 3));
    }

    #[test]
    fn all_outward() {
        for m in [
            tetrahedron(),
            cube(),
            octahedron(),
            icosahedron(),
            icosphere(1),
            grid_box([2.0, 1.0, 0.5], [4, 2, 2]),
        ] {
            assert_outward(&m);
        }
    }
}
