pub mod dataset;
pub mod engine;
pub mod eval;
pub mod geom;
pub mod graph;
pub mod harness;
pub mod mesh;
pub mod model;
pub mod render;
pub mod shapes;
