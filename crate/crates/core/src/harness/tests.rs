use std::collections::BTreeMap;
use std::path::Path;

use super::*;
use crate::shapes;

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    dataset::write_dataset(dir.path(), &dataset::toy_dataset()).unwrap();
    dir
}

fn small_config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::parse(
        "steps = 4\ncheckpoint_interval = 2\nencoder_width = 8\ngenerator_width = 8\n\
         noise_dim = 4\ndisc_layers = 2\ndisc_channels = 4\nimage_size = 16\nviews = 3\nseed = 9\n",
    )
    .unwrap();
    cfg.dataset = data.to_path_buf();
    cfg.out = out.to_path_buf();
    cfg
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for (k, v) in snapshot(&path) {
                out.insert(format!("{}/{k}", path.display()), v);
            }
        } else {
            out.insert(path.display().to_string(), fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn zero_steps_writes_only_the_initial_checkpoint() {
    let data = toy_dir();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_config(data.path(), out.path());
    cfg.steps = 0;
    let summary = run_train(&cfg, |_| {}).unwrap();
    assert!(summary.metrics.is_empty());
    let mut names: Vec<String> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, [CONFIG_FILE, FINAL_CHECKPOINT]);
    let model = load_model(&out.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(model, Model::new(cfg.train.model, cfg.train.seed).unwrap());
}

#[test]
fn training_artifacts_are_deterministic() {
    let data = toy_dir();
    let before = snapshot(data.path());
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().unwrap();
            let cfg = small_config(data.path(), out.path());
            let mut seen = 0;
            let summary = run_train(&cfg, |_| seen += 1).unwrap();
            assert_eq!(seen, 4);
            assert_eq!(summary.checkpoints.len(), 3);
            assert!(summary.diversity.iter().all(|(_, d)| *d > 0.0));
            let read = |n: &str| fs::read(out.path().join(n)).unwrap();
            let metrics = String::from_utf8(read(METRICS_FILE)).unwrap();
            assert_eq!(metrics.lines().count(), 5);
            assert_eq!(metrics.lines().next().unwrap(), METRICS_HEADER);
            assert_eq!(read(&checkpoint_name(4)), read(FINAL_CHECKPOINT));
            (metrics, read(FINAL_CHECKPOINT), read(DIVERSITY_FILE), out)
        })
        .collect();
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(runs[0].2, runs[1].2);
    assert_eq!(snapshot(data.path()), before, "dataset was modified");

    // the resolved config reproduces the run
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_file(&runs[0].3.path().join(CONFIG_FILE)).unwrap();
    cfg.out = out.path().to_path_buf();
    run_train(&cfg, |_| {}).unwrap();
    assert_eq!(
        fs::read_to_string(out.path().join(METRICS_FILE)).unwrap(),
        runs[0].0
    );
}

#[test]
fn non_finite_loss_is_a_numerical_error_with_dump() {
    let data = toy_dir();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_config(data.path(), out.path());
    cfg.train.lr = 1e300;
    cfg.steps = 10;
    let err = run_train(&cfg, |_| {}).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    let dumps = fs::read_dir(out.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("nonfinite-step-")
        })
        .count();
    assert_eq!(dumps, 1);
}

#[test]
fn train_input_errors() {
    let out = tempfile::tempdir().unwrap();
    let cfg = small_config(&out.path().join("missing"), out.path());
    assert_eq!(run_train(&cfg, |_| {}).unwrap_err().exit_code(), 2);
    let data = toy_dir();
    let mut cfg = small_config(data.path(), out.path());
    cfg.train.model.noise_dim = 0;
    assert_eq!(run_train(&cfg, |_| {}).unwrap_err().exit_code(), 1);
}

#[test]
fn generate_render_and_eval() {
    let data = toy_dir();
    let out = tempfile::tempdir().unwrap();
    let cfg = small_config(data.path(), out.path());
    run_train(&cfg, |_| {}).unwrap();
    let ckpt = out.path().join(FINAL_CHECKPOINT);

    // an unseen mesh
    let mesh_path = out.path().join("ico.obj");
    fs::write(&mesh_path, shapes::icosahedron().to_obj()).unwrap();
    let gen = |seed: u64, name: &str| {
        let path = out.path().join(name);
        run_generate(&ckpt, &mesh_path, seed, &path, None, &cfg).unwrap();
        fs::read(path).unwrap()
    };
    let a = gen(1, "a.bin");
    assert_eq!(a, gen(1, "b.bin"));
    assert_ne!(a, gen(2, "c.bin"));
    let colors = dataset::decode_facecolors(&a).unwrap();
    assert_eq!(colors.shape(), &[20, 3]);

    let renders = out.path().join("renders");
    let written = run_render(&mesh_path, &out.path().join("a.bin"), &renders, true, &cfg).unwrap();
    assert_eq!(written.len(), 2 * cfg.train.views);
    assert!(written.iter().all(|p| p.exists()));
    let dir = out.path().join("gen-renders");
    run_generate(
        &ckpt,
        &mesh_path,
        1,
        &out.path().join("d.bin"),
        Some(&dir),
        &cfg,
    )
    .unwrap();
    assert_eq!(fs::read_dir(&dir).unwrap().count(), cfg.train.views);

    let truth = run_eval(&cfg, &FakeSource::Truth, None).unwrap();
    assert!(truth.pooled.abs() < 1e-8, "{}", truth.pooled);
    let csv = out.path().join("per_mesh.csv");
    let random = run_eval(&cfg, &FakeSource::Random, Some(&csv)).unwrap();
    assert!(random.pooled > truth.pooled);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 3);
    let trained = run_eval(&cfg, &FakeSource::Checkpoint(ckpt), None).unwrap();
    assert!(trained.pooled.is_finite());
}

#[test]
fn graph_stats_of_a_tetrahedron() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.obj");
    fs::write(&path, shapes::tetrahedron().to_obj()).unwrap();
    let s = run_graph_stats(&path).unwrap();
    assert_eq!((s.nodes, s.edges, s.components), (4, 6, 1));
    assert_eq!(s.degree_histogram.get(&3), Some(&4));
    assert_eq!(
        run_graph_stats(&dir.path().join("none.obj"))
            .unwrap_err()
            .exit_code(),
        2
    );
}
