//! Brute-force oracles and fixture sets shared by the integration tests.
#![allow(dead_code)]

use meshtex::geom::{self, Vec3};
use meshtex::graph::build_face_adjacency;
use meshtex::mesh::{validate_mesh, Mesh};
use meshtex::render::{rasterize, Camera};
use meshtex::shapes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Pairs of faces with at least one unordered vertex pair in common.
pub fn brute_force_edges(mesh: &Mesh) -> BTreeSet<(usize, usize)> {
    let edges = |f: &[usize; 3]| -> BTreeSet<(usize, usize)> {
        (0..3)
            .map(|k| {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                (a.min(b), a.max(b))
            })
            .collect()
    };
    let all: Vec<_> = mesh.faces.iter().map(edges).collect();
    let mut out = BTreeSet::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if !all[i].is_disjoint(&all[j]) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Differences between the built adjacency and the oracle, if any.
pub fn adjacency_errors(mesh: &Mesh) -> Result<(), String> {
    let g = build_face_adjacency(mesh);
    let expected = brute_force_edges(mesh);
    let got: BTreeSet<_> = g.edge_list().into_iter().collect();
    if got != expected {
        let missing = expected.difference(&got).count();
        let extra = got.difference(&expected).count();
        return Err(format!("{missing} edges missing, {extra} extra"));
    }
    if g.num_edges() != expected.len() {
        return Err("duplicate neighbor entries".into());
    }
    for i in 0..g.num_nodes {
        for &j in g.neighbors_of(i) {
            if i == j || !g.neighbors_of(j).contains(&i) {
                return Err(format!("bad neighbor pair {i}-{j}"));
            }
        }
    }
    Ok(())
}

fn rotated_faces(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Mesh {
    let mut m = mesh.clone();
    for f in &mut m.faces {
        f.rotate_left(rng.random_range(0..3));
    }
    let mut order: Vec<usize> = (0..m.num_faces()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    m.permute_faces(&order)
}

fn random_subset(mesh: &Mesh, keep: f64, rng: &mut ChaCha8Rng) -> Mesh {
    let faces = mesh
        .faces
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < keep)
        .collect();
    Mesh::new(mesh.vertices.clone(), faces)
}

/// Random triangles over a small vertex pool; many edges end up shared by
/// three or more faces.
fn triangle_soup(vertices: usize, faces: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let verts = (0..vertices)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let tris = (0..faces)
        .map(|_| loop {
            let t = [
                rng.random_range(0..vertices),
                rng.random_range(0..vertices),
                rng.random_range(0..vertices),
            ];
            if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] {
                break t;
            }
        })
        .collect();
    validate_mesh(&Mesh::new(verts, tris)).unwrap().0
}

/// At least twenty meshes of up to 500 faces: platonic solids, icospheres,
/// subdivided boxes, shuffled and thinned icospheres, and non-manifold
/// triangle soups.
pub fn oracle_meshes() -> Vec<(String, Mesh)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases: Vec<(String, Mesh)> = vec![
        ("tetrahedron".into(), shapes::tetrahedron()),
        ("cube".into(), shapes::cube()),
        ("octahedron".into(), shapes::octahedron()),
        ("icosahedron".into(), shapes::icosahedron()),
        ("icosphere1".into(), shapes::icosphere(1)),
        ("icosphere2".into(), shapes::icosphere(2)),
        (
            "box 2x2x2".into(),
            shapes::grid_box([1.0, 1.0, 1.0], [2, 2, 2]),
        ),
        (
            "box 3x2x4".into(),
            shapes::grid_box([1.0, 2.0, 0.5], [3, 2, 4]),
        ),
        (
            "box 6x6x6".into(),
            shapes::grid_box([1.0, 1.0, 1.0], [6, 6, 6]),
        ),
    ];
    let base = shapes::icosphere(2);
    for k in 0..4 {
        cases.push((
            format!("shuffled icosphere {k}"),
            rotated_faces(&base, &mut rng),
        ));
    }
    for k in 0..4 {
        let keep = 0.3 + 0.15 * k as f64;
        cases.push((
            format!("icosphere subset {k}"),
            random_subset(&base, keep, &mut rng),
        ));
    }
    for k in 0..5 {
        let soup = triangle_soup(12 + 6 * k, 40 + 90 * k, &mut rng);
        cases.push((format!("soup {k}"), soup));
    }
    cases
}

/// Möller–Trumbore intersection; returns the ray parameter.
fn intersect(origin: Vec3, dir: Vec3, tri: [Vec3; 3]) -> Option<f64> {
    let e1 = geom::sub(tri[1], tri[0]);
    let e2 = geom::sub(tri[2], tri[0]);
    let p = geom::cross(dir, e2);
    let det = geom::dot(e1, p);
    if det == 0.0 {
        return None;
    }
    let s = geom::sub(origin, tri[0]);
    let u = geom::dot(s, p) / det;
    let q = geom::cross(s, e1);
    let v = geom::dot(dir, q) / det;
    if u < 0.0 || v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(geom::dot(e2, q) / det)
}

/// Nearest front-facing hit per pixel center. The ray direction has unit
/// component along the view axis, so the ray parameter is view depth.
pub fn ray_cast(mesh: &Mesh, cam: &Camera) -> Vec<i32> {
    let (right, up, forward) = cam.basis();
    let sy = (cam.fov_y.to_radians() / 2.0).tan();
    let sx = sy * cam.width as f64 / cam.height as f64;
    let mut out = vec![-1; cam.width * cam.height];
    for row in 0..cam.height {
        for col in 0..cam.width {
            let x = (col as f64 + 0.5) / cam.width as f64 * 2.0 - 1.0;
            let y = 1.0 - (row as f64 + 0.5) / cam.height as f64 * 2.0;
            let dir = geom::add(
                forward,
                geom::add(geom::scale(right, x * sx), geom::scale(up, y * sy)),
            );
            let mut best = cam.far;
            for f in 0..mesh.num_faces() {
                let tri = mesh.triangle(f);
                // triangles reaching the near plane are not drawn
                if tri
                    .iter()
                    .any(|&v| geom::dot(geom::sub(v, cam.eye), forward) <= cam.near)
                {
                    continue;
                }
                // front faces wind counter-clockwise toward the eye
                let n = geom::cross(geom::sub(tri[1], tri[0]), geom::sub(tri[2], tri[0]));
                if geom::dot(n, geom::sub(cam.eye, tri[0])) <= 0.0 {
                    continue;
                }
                if let Some(t) = intersect(cam.eye, dir, tri) {
                    if t < best {
                        best = t;
                        out[row * cam.width + col] = f as i32;
                    }
                }
            }
        }
    }
    out
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if let Some(u) = geom::normalize(v) {
            if geom::norm(v) <= 1.0 {
                return u;
            }
        }
    }
}

fn random_camera(rng: &mut ChaCha8Rng, distance: f64) -> Camera {
    let eye = geom::scale(random_unit(rng), distance);
    let target = [
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
    ];
    Camera::new(
        eye,
        target,
        [0.0, 1.0, 0.0],
        rng.random_range(30.0..60.0),
        32,
        32,
        0.05,
        100.0,
    )
    .unwrap()
}

fn soup(n: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for i in 0..n {
        let c = [
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
        ];
        for _ in 0..3 {
            vertices.push(geom::add(
                c,
                geom::scale(random_unit(rng), rng.random_range(0.1..0.6)),
            ));
        }
        faces.push([3 * i, 3 * i + 1, 3 * i + 2]);
    }
    Mesh::new(vertices, faces)
}

fn transformed(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Mesh {
    let s = rng.random_range(0.5..1.2);
    let shift = [
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
    ];
    let (a, b) = (rng.random_range(0.0..6.3f64), rng.random_range(0.0..6.3f64));
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            let x = [
                v[0] * a.cos() - v[2] * a.sin(),
                v[1],
                v[0] * a.sin() + v[2] * a.cos(),
            ];
            let y = [
                x[0],
                x[1] * b.cos() - x[2] * b.sin(),
                x[1] * b.sin() + x[2] * b.cos(),
            ];
            geom::add(geom::scale(y, s), shift)
        })
        .collect();
    Mesh::new(vertices, mesh.faces.clone())
}

/// Twelve 32×32 scenes: triangle soups, transformed solids and cameras
/// placed inside the geometry.
pub fn oracle_scenes() -> Vec<(String, Mesh, Camera)> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut scenes: Vec<(String, Mesh, Camera)> = Vec::new();
    for k in 0..5 {
        let d = rng.random_range(1.8..2.6);
        let cam = random_camera(&mut rng, d);
        scenes.push((format!("soup {k}"), soup(20 + 10 * k, &mut rng), cam));
    }
    let solids = [
        shapes::cube(),
        shapes::icosphere(1),
        shapes::icosphere(2),
        shapes::octahedron(),
        shapes::grid_box([1.0, 0.5, 1.5], [3, 2, 4]),
    ];
    for (k, m) in solids.iter().enumerate() {
        let d = rng.random_range(1.6..2.4);
        let cam = random_camera(&mut rng, d);
        scenes.push((format!("solid {k}"), transformed(m, &mut rng), cam));
    }
    // cameras inside the geometry exercise the near-plane rule
    for k in 0..2 {
        let cam = random_camera(&mut rng, 0.6);
        scenes.push((format!("close {k}"), soup(40, &mut rng), cam));
    }

    scenes
}

/// Pixels where the rasterizer and the ray caster disagree.
pub fn raster_mismatches(mesh: &Mesh, cam: &Camera) -> usize {
    let raster = rasterize(mesh, cam);
    let oracle = ray_cast(mesh, cam);
    (0..oracle.len())
        .filter(|&i| oracle[i] != raster.face_index[i])
        .count()
}
