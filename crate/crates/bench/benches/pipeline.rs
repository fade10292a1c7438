use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use meshtex::dataset::random_colors;
use meshtex::eval::FeatureExtractor;
use meshtex::model::{GraphInput, Model, ModelConfig};
use meshtex::render::{self, make_view_ring, Shading, ViewRing};
use meshtex_bench::{sphere, toy_trainer};

fn rendering(c: &mut Criterion) {
    let mesh = sphere();
    let cams = make_view_ring(&ViewRing::default()).unwrap();
    let colors = random_colors(mesh.num_faces(), 0);
    c.bench_function("rasterize 1280 faces 64x64", |b| {
        b.iter(|| render::rasterize(black_box(&mesh), &cams[0]))
    });
    c.bench_function("render ring of 8 views", |b| {
        b.iter(|| {
            for cam in &cams {
                black_box(
                    render::render(&mesh, cam, &colors, &Shading::lambertian(), [1.0; 3]).unwrap(),
                );
            }
        })
    });
}

fn networks(c: &mut Criterion) {
    let model = Model::new(ModelConfig::default(), 0).unwrap();
    let mesh = sphere();
    let input = GraphInput::from_mesh(&mesh);
    let z = vec![0.1; 16];
    c.bench_function("generate 1280 faces", |b| {
        b.iter(|| model.generate(black_box(&input), &z).unwrap())
    });
    let cams = make_view_ring(&ViewRing::default()).unwrap();
    let colors = model.generate(&input, &z).unwrap();
    let image = render::render(&mesh, &cams[0], &colors, &Shading::Unlit, [1.0; 3])
        .unwrap()
        .image;
    c.bench_function("discriminator forward 64x64", |b| {
        b.iter(|| model.discriminate(black_box(&image)).unwrap())
    });
    let extractor = FeatureExtractor::default();
    c.bench_function("perceptual features 64x64", |b| {
        b.iter(|| extractor.extract(black_box(&image)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    let mut trainer = toy_trainer(ModelConfig::default());
    group.bench_function("train step, 8 views 64x64", |b| {
        b.iter(|| trainer.train_step().unwrap())
    });
    group.finish();
}

criterion_group!(benches, rendering, networks, training);
criterion_main!(benches);
