use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{build_face_adjacency, normalize_adjacency, NormalizedAdjacency};
use crate::shapes;

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var, EngineError>;

/// Central differences of the scalar `build` output, evaluated on fresh
/// constant-only tapes so no backward rule is involved.
fn fd_oracle(inputs: &[Tensor], h: f64, build: &Build) -> Vec<Vec<f64>> {
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let v: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let out = build(&mut t, &v).unwrap();
        t.value(out).item()
    };
    let mut work = inputs.to_vec();
    let mut grads = Vec::new();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let p = eval(&work);
            work[i].data_mut()[j] = x0 - h;
            let m = eval(&work);
            work[i].data_mut()[j] = x0;
            *gj = (p - m) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

fn tape_grads(inputs: &[Tensor], build: &Build) -> Vec<Vec<f64>> {
    let mut t = Tape::new();
    let v: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let out = build(&mut t, &v).unwrap();
    let g = t.backward(out).unwrap();
    v.iter()
        .zip(inputs)
        .map(|(var, x)| {
            g.get(*var)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; x.len()])
        })
        .collect()
}

fn max_rel_err(inputs: &[Tensor], h: f64, build: &Build) -> f64 {
    let a = tape_grads(inputs, build);
    let n = fd_oracle(inputs, h, build);
    a.iter()
        .zip(&n)
        .map(|(x, y)| gradcheck::relative_error(x, y))
        .fold(0.0, f64::max)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Weighted sum with fixed random weights, turning any output into a scalar
/// with a nontrivial gradient.
fn project(t: &mut Tape, x: Var, seed: u64) -> Result<Var, EngineError> {
    let shape = t.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(random(&shape, &mut rng));
    let n = t.value(x).len();
    let flat_x = t.reshape(x, vec![1, n])?;
    let flat_w = t.reshape(w, vec![n, 1])?;
    let s = t.matmul(flat_x, flat_w)?;
    t.sum(s)
}

fn k4() -> Arc<NormalizedAdjacency> {
    Arc::new(normalize_adjacency(&build_face_adjacency(
        &shapes::tetrahedron(),
    )))
}

#[test]
fn matmul_identity_and_small_product() {
    let mut t = Tape::new();
    let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 4.0, -1.0]]).unwrap();
    let i = t.constant(Tensor::identity(2));
    let xv = t.constant(x.clone());
    let y = t.matmul(i, xv).unwrap();
    assert_eq!(t.value(y), &x);

    let a = t.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let b = t.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c).data(), &[3.0, 7.0]);
    assert!(matches!(
        t.matmul(b, b),
        Err(EngineError::ShapeMismatch { .. })
    ));
}

#[test]
fn matmul_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [random(&[3, 4], &mut rng), random(&[4, 2], &mut rng)];
    let err = max_rel_err(&inputs, 1e-6, &|t, v| {
        let c = t.matmul(v[0], v[1])?;
        project(t, c, 9)
    });
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[1, 5, 7], &mut rng);
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let k = t.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
    let y = t.conv2d(xv, k, 1, 0).unwrap();
    assert_eq!(t.value(y), &x);
}

#[test]
fn conv_averaging_kernel_on_constant_image() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::full(vec![1, 6, 6], 0.7));
    let k = t.constant(Tensor::full(vec![1, 1, 3, 3], 1.0 / 9.0));
    let y = t.conv2d(x, k, 1, 1).unwrap();
    let out = t.value(y);
    assert_eq!(out.shape(), &[1, 6, 6]);
    for r in 1..5 {
        for c in 1..5 {
            assert!((out.data()[r * 6 + c] - 0.7).abs() < 1e-15);
        }
    }
    // the zero padding darkens the border
    assert!(out.data()[0] < 0.7);
}

#[test]
fn conv_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = [
        random(&[2, 8, 8], &mut rng),
        random(&[3, 2, 3, 3], &mut rng),
    ];
    for (stride, pad) in [(1, 1), (2, 1), (2, 0)] {
        let err = max_rel_err(&inputs, 1e-6, &move |t, v| {
            let y = t.conv2d(v[0], v[1], stride, pad)?;
            project(t, y, 4)
        });
        assert!(err <= 1e-5, "stride {stride} pad {pad}: {err}");
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(vec![2, 4, 4]));
    let k = t.constant(Tensor::zeros(vec![1, 3, 3, 3]));
    assert!(t.conv2d(x, k, 1, 1).is_err());
    let big = t.constant(Tensor::zeros(vec![1, 2, 9, 9]));
    assert!(t.conv2d(x, big, 1, 0).is_err());
}

#[test]
fn activation_values() {
    assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    assert!((Activation::LEAKY.apply(-1.0) + 0.2).abs() < 1e-16);
    assert_eq!(Activation::Relu.apply(-3.0), 0.0);
    assert_eq!(Activation::Tanh.apply(0.0), 0.0);
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // keep away from the kink at zero
    let x = random(&[17], &mut rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v } * 2.0);
    for kind in [
        Activation::LEAKY,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ] {
        let err = max_rel_err(std::slice::from_ref(&x), 1e-6, &move |t, v| {
            let y = t.activation(v[0], kind)?;
            project(t, y, 6)
        });
        assert!(err <= 1e-6, "{kind:?}: {err}");
    }
}

#[test]
fn gcn_two_node_path() {
    let adj = Arc::new(NormalizedAdjacency {
        num_nodes: 2,
        offsets: vec![0, 2, 4],
        indices: vec![0, 1, 1, 0],
        weights: vec![0.5; 4],
    });
    let mut t = Tape::new();
    let h = t.constant(Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap());
    let w = t.constant(Tensor::from_rows(&[vec![1.0]]).unwrap());
    let y = t.gcn_conv(&adj, h, w).unwrap();
    assert_eq!(t.value(y).data(), &[2.0, 2.0]);
}

#[test]
fn gcn_isolated_node_is_dense_map() {
    let adj = Arc::new(NormalizedAdjacency::identity(1));
    let row = Tensor::from_rows(&[vec![0.3, -1.2, 4.0]]).unwrap();
    let mut t = Tape::new();
    let h = t.constant(row.clone());
    let w = t.constant(Tensor::identity(3));
    let y = t.gcn_conv(&adj, h, w).unwrap();
    assert_eq!(t.value(y), &row);
}

#[test]
fn gcn_gradient_on_k4() {
    let adj = k4();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = [random(&[4, 3], &mut rng), random(&[3, 5], &mut rng)];
    let err = max_rel_err(&inputs, 1e-6, &move |t, v| {
        let y = t.gcn_conv(&adj, v[0], v[1])?;
        project(t, y, 8)
    });
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn gcn_is_permutation_equivariant() {
    let mesh = shapes::icosphere(1);
    let adj = Arc::new(normalize_adjacency(&build_face_adjacency(&mesh)));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = mesh.num_faces();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let padj = Arc::new(normalize_adjacency(&build_face_adjacency(
        &mesh.permute_faces(&order),
    )));
    let h = random(&[n, 4], &mut rng);
    let w = random(&[4, 3], &mut rng);

    let mut t = Tape::new();
    let (hv, wv) = (t.constant(h.clone()), t.constant(w.clone()));
    let y = t.gcn_conv(&adj, hv, wv).unwrap();
    let hp = t.constant(h.gather_rows(&order));
    let yp = t.gcn_conv(&padj, hp, wv).unwrap();
    assert_eq!(t.value(yp), &t.value(y).gather_rows(&order));
}

#[test]
fn bce_values_and_gradient() {
    let mut t = Tape::new();
    let z = t.constant(Tensor::vector(vec![0.0]));
    for target in [0.0, 1.0] {
        let l = t.bce_with_logits(z, &[target]).unwrap();
        assert!((t.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
    let big = t.constant(Tensor::vector(vec![20.0]));
    let l = t.bce_with_logits(big, &[1.0]).unwrap();
    assert!(t.value(l).item() <= 1e-8);
    // very negative logits stay finite
    let neg = t.constant(Tensor::vector(vec![-800.0]));
    let l = t.bce_with_logits(neg, &[1.0]).unwrap();
    assert!((t.value(l).item() - 800.0).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let logits = random(&[9], &mut rng).map(|v| v * 5.0);
    let targets: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
    let mut t = Tape::new();
    let x = t.param(logits.clone());
    let l = t.bce_with_logits(x, &targets).unwrap();
    let g = t.backward(l).unwrap();
    for (i, gi) in g.get(x).unwrap().data().iter().enumerate() {
        let want = sigmoid(logits.data()[i]) - targets[i];
        assert!((gi * 9.0 - want).abs() <= 1e-9);
    }
}

#[test]
fn instance_norm_and_pool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[3, 4, 5], &mut rng);
    let err = max_rel_err(std::slice::from_ref(&x), 1e-6, &|t, v| {
        let y = t.instance_norm(v[0], 1e-5)?;
        project(t, y, 13)
    });
    assert!(err <= 1e-6, "instance norm {err}");
    let err = max_rel_err(std::slice::from_ref(&x), 1e-6, &|t, v| {
        let y = t.global_avg_pool(v[0])?;
        project(t, y, 14)
    });
    assert!(err <= 1e-8, "pool {err}");
}

#[test]
fn remaining_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let rows = random(&[4, 3], &mut rng);
    let noise = random(&[2], &mut rng);
    let bias = random(&[5], &mut rng);
    let w = random(&[5, 5], &mut rng);
    let err = max_rel_err(&[rows, noise, bias, w], 1e-6, &|t, v| {
        let c = t.concat_noise(v[0], v[1])?;
        let b = t.add_row_bias(c, v[2])?;
        let m = t.matmul(b, v[3])?;
        let s = t.scale(m, 0.5)?;
        let a = t.add(s, b)?;
        let mse = t.mse(a, b)?;
        let mean = t.mean(a)?;
        let sum = t.add(mse, mean)?;
        t.sum(sum)
    });
    assert!(err <= 1e-6, "{err}");

    let img = random(&[2, 3, 3], &mut rng);
    let cb = random(&[2], &mut rng);
    let err = max_rel_err(&[img, cb], 1e-6, &|t, v| {
        let y = t.add_channel_bias(v[0], v[1])?;
        let y = t.activation(y, Activation::Tanh)?;
        let logits = t.reshape(y, vec![18])?;
        let targets: Vec<f64> = (0..18).map(|i| (i % 3 == 0) as u8 as f64).collect();
        t.bce_with_logits(logits, &targets)
    });
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn fan_out_accumulates_additively() {
    // f(x) = g(x) + h(x) with both branches reading x
    let x = Tensor::vector(vec![0.3, -0.7, 1.1]);
    let branch_g = |t: &mut Tape, v: Var| t.activation(v, Activation::Tanh).and_then(|y| t.sum(y));
    let branch_h = |t: &mut Tape, v: Var| {
        t.mse(v, v)
            .and_then(|_| t.scale(v, 3.0))
            .and_then(|y| t.sum(y))
    };

    let mut t = Tape::new();
    let v = t.param(x.clone());
    let a = branch_g(&mut t, v).unwrap();
    let b = branch_h(&mut t, v).unwrap();
    let s = t.add(a, b).unwrap();
    let both = t.backward(s).unwrap().get(v).unwrap().clone();

    let single = |f: &dyn Fn(&mut Tape, Var) -> Result<Var, EngineError>| {
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let out = f(&mut t, v).unwrap();
        t.backward(out).unwrap().get(v).unwrap().clone()
    };
    let mut sum = single(&branch_g);
    sum.add_assign(&single(&branch_h));
    assert_eq!(both, sum);
}

#[test]
fn non_finite_values_trip_an_error() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![1e300]));
    assert!(matches!(
        t.scale(x, 1e300),
        Err(EngineError::NonFinite { .. })
    ));
}

#[test]
fn backward_with_seed_and_constants() {
    let mut t = Tape::new();
    let a = t.param(Tensor::vector(vec![1.0, 2.0]));
    let c = t.constant(Tensor::vector(vec![5.0, 5.0]));
    let s = t.add(a, c).unwrap();
    let g = t
        .backward_with(s, Tensor::vector(vec![0.25, -1.0]))
        .unwrap();
    assert_eq!(g.get(a).unwrap().data(), &[0.25, -1.0]);
    assert!(g.get(c).is_none());
    assert!(t.backward(s).is_err());
}

#[test]
fn library_gradcheck_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inputs = [random(&[2, 3], &mut rng), random(&[3, 2], &mut rng)];
    let err = gradcheck::check(&inputs, 1e-6, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        let y = t.activation(y, Activation::Sigmoid)?;
        t.sum(y)
    })
    .unwrap();
    assert!(err < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_small_networks_pass_finite_differences(
        seed in any::<u64>(),
        c_in in 1usize..3,
        c_out in 1usize..3,
        size in 3usize..7,
        rows in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random(&[c_in, size, size], &mut rng);
        let k = random(&[c_out, c_in, 3, 3], &mut rng);
        let err = max_rel_err(&[img, k], 1e-6, &|t, v| {
            let y = t.conv2d(v[0], v[1], 1, 1)?;
            let y = t.instance_norm(y, 1e-5)?;
            let y = t.activation(y, Activation::Sigmoid)?;
            project(t, y, 21)
        });
        prop_assert!(err <= 1e-5, "conv stack {}", err);

        let a = random(&[rows, 3], &mut rng);
        let b = random(&[3, 2], &mut rng);
        let err = max_rel_err(&[a, b], 1e-6, &|t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.activation(y, Activation::Tanh)?;
            project(t, y, 22)
        });
        prop_assert!(err <= 1e-5, "dense {}", err);
    }
}
