//! Rasterizer face buffers against per-pixel ray casting.

mod common;

use meshtex::render::rasterize;

#[test]
fn face_buffers_match_ray_casting() {
    let scenes = common::oracle_scenes();
    assert!(scenes.len() >= 10);
    let mut covered = 0;
    for (name, mesh, cam) in &scenes {
        assert_eq!(common::raster_mismatches(mesh, cam), 0, "{name}");
        covered += rasterize(mesh, cam).covered();
    }
    assert!(covered > 3000, "scenes barely cover the images: {covered}");
}
