//! Fixtures shared by the pipeline benchmarks.

use meshtex::dataset;
use meshtex::mesh::{normalize_mesh, Mesh};
use meshtex::model::{ModelConfig, TrainConfig, Trainer};
use meshtex::shapes;

/// A normalized level-3 icosphere (1280 faces).
pub fn sphere() -> Mesh {
    normalize_mesh(&shapes::icosphere(3))
}

/// Trainer over the toy dataset with the default network sizes.
pub fn toy_trainer(model: ModelConfig) -> Trainer {
    let config = TrainConfig {
        model,
        ..TrainConfig::default()
    };
    let data = dataset::toy_dataset()
        .into_iter()
        .map(|i| (i.name, i.mesh, i.colors))
        .collect();
    Trainer::new(config, data).expect("toy data is valid")
}
