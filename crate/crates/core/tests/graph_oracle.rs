//! Face adjacency against an all-pairs shared-edge search.

mod common;

use meshtex::graph::build_face_adjacency;
use meshtex::shapes;

#[test]
fn adjacency_matches_brute_force() {
    let cases = common::oracle_meshes();
    assert!(cases.len() >= 20);
    for (name, mesh) in &cases {
        assert!(mesh.num_faces() <= 500, "{name}");
        if let Err(e) = common::adjacency_errors(mesh) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn closed_shapes_have_three_neighbors_per_face() {
    for mesh in [
        shapes::tetrahedron(),
        shapes::icosphere(2),
        shapes::grid_box([1.0; 3], [3, 3, 3]),
    ] {
        let g = build_face_adjacency(&mesh);
        assert!((0..g.num_nodes).all(|i| g.degree(i) == 3));
        assert_eq!(g.num_edges() * 2, 3 * mesh.num_faces());
        assert_eq!(g.connected_components(), 1);
    }
}
