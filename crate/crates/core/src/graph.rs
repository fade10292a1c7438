//! Face-adjacency graphs: one node per triangle, an edge between every pair
//! of faces sharing a mesh edge, and the self-loop-augmented symmetric
//! normalization consumed by graph convolutions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::engine::Tensor;
use crate::mesh::Mesh;

/// Number of geometric features per node: centroid xyz, normal xyz.
pub const NODE_FEATURES: usize = 6;

/// Face-adjacency graph in compressed neighbor-list form.
///
/// Neighbors of face `i` are listed in the order of `i`'s own edges
/// (v0v1, v1v2, v2v0), so the stored order does not depend on how faces are
/// numbered. This is what makes graph convolutions exactly
/// permutation-equivariant in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGraph {
    pub num_nodes: usize,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<usize>,
    /// `num_nodes × 6`
    pub node_features: Tensor,
}

impl FaceGraph {
    pub fn neighbors_of(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted undirected edge list `(i, j)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = (0..self.num_nodes)
            .flat_map(|i| {
                self.neighbors_of(i)
                    .iter()
                    .filter(move |&&j| i < j)
                    .map(move |&j| (i, j))
            })
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn connected_components(&self) -> usize {
        let mut label = vec![usize::MAX; self.num_nodes];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.num_nodes {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(n) = stack.pop() {
                for &m in self.neighbors_of(n) {
                    if label[m] == usize::MAX {
                        label[m] = count;
                        stack.push(m);
                    }
                }
            }
            count += 1;
        }
        count
    }

    pub fn stats(&self) -> GraphStats {
        let mut degree_histogram = BTreeMap::new();
        for i in 0..self.num_nodes {
            *degree_histogram.entry(self.degree(i)).or_insert(0) += 1;
        }
        GraphStats {
            nodes: self.num_nodes,
            edges: self.num_edges(),
            degree_histogram,
            components: self.connected_components(),
        }
    }
}

/// Summary printed by the `graph-stats` command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub degree_histogram: BTreeMap<usize, usize>,
    pub components: usize,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes {}", self.nodes)?;
        writeln!(f, "edges {}", self.edges)?;
        writeln!(f, "components {}", self.components)?;
        writeln!(f, "degree count")?;
        for (d, c) in &self.degree_histogram {
            writeln!(f, "{d} {c}")?;
        }
        Ok(())
    }
}

/// Connects faces that share an unordered vertex pair. Edges shared by more
/// than two faces connect every pair of incident faces.
pub fn build_face_adjacency(mesh: &Mesh) -> FaceGraph {
    let n = mesh.num_faces();
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(n * 2);
    for (f, tri) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }

    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(n * 3);
    offsets.push(0);
    for (f, tri) in mesh.faces.iter().enumerate() {
        let start = neighbors.len();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            for &g in &edge_faces[&(a.min(b), a.max(b))] {
                if g != f && !neighbors[start..].contains(&g) {
                    neighbors.push(g);
                }
            }
        }
        offsets.push(neighbors.len());
    }

    FaceGraph {
        num_nodes: n,
        offsets,
        neighbors,
        node_features: build_node_features(mesh),
    }
}

/// `F × 6` matrix of (centroid, normal) rows. Computes geometry on the fly
/// if the mesh does not carry it.
pub fn build_node_features(mesh: &Mesh) -> Tensor {
    let owned;
    let m = if mesh.has_geometry() {
        mesh
    } else {
        owned = crate::mesh::compute_face_geometry(mesh);
        &owned
    };
    let mut data = Vec::with_capacity(m.num_faces() * NODE_FEATURES);
    for (c, n) in m.face_centroids.iter().zip(&m.face_normals) {
        data.extend_from_slice(c);
        data.extend_from_slice(n);
    }
    Tensor::new(vec![m.num_faces(), NODE_FEATURES], data).expect("row-major F×6")
}

/// `D^{-1/2} (A + I) D^{-1/2}` in compressed row form. Each row stores its
/// self-loop first, followed by the graph neighbors in stored order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub num_nodes: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, w)| w).sum()
    }

    /// Weight of entry `(i, j)`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(k, _)| k == j).map_or(0.0, |(_, w)| w)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.num_nodes]; self.num_nodes];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, w) in self.row(i) {
                row[j] += w;
            }
        }
        d
    }

    /// The identity operator: every node isolated.
    pub fn identity(n: usize) -> Self {
        Self {
            num_nodes: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            weights: vec![1.0; n],
        }
    }
}

pub fn normalize_adjacency(graph: &FaceGraph) -> NormalizedAdjacency {
    let n = graph.num_nodes;
    let deg: Vec<f64> = (0..n).map(|i| (graph.degree(i) + 1) as f64).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(graph.neighbors.len() + n);
    let mut weights = Vec::with_capacity(graph.neighbors.len() + n);
    offsets.push(0);
    for i in 0..n {
        indices.push(i);
        weights.push(1.0 / (deg[i] * deg[i]).sqrt());
        for &j in graph.neighbors_of(i) {
            indices.push(j);
            weights.push(1.0 / (deg[i] * deg[j]).sqrt());
        }
        offsets.push(indices.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        offsets,
        indices,
        weights,
    }
}
