//! Reverse-mode differentiation over dense tensors.
//!
//! Every forward method on [`Tape`] appends a node holding its output value
//! and whatever it needs for the backward rule. [`Tape::backward`] walks the
//! nodes in reverse insertion order, which is a valid reverse topological
//! order because a node can only reference nodes created before it.
//! Gradients reaching a node along several paths are summed.

use std::sync::Arc;

use super::linalg::{self, ConvGeometry};
use super::{EngineError, Tensor};
use crate::graph::NormalizedAdjacency;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at input `x` with output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Backward rule of a [`Tape::custom`] node: maps the output gradient to one
/// gradient per input (same shapes as the inputs).
pub type CustomBackward = Box<dyn Fn(&Tensor) -> Vec<Tensor> + Send + Sync>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    Conv2d {
        input: Var,
        kernel: Var,
        geometry: ConvGeometry,
        cols: Vec<f64>,
    },
    InstanceNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    SpMM {
        adj: Arc<NormalizedAdjacency>,
        input: Var,
    },
    ConcatNoise {
        rows: Var,
        noise: Var,
    },
    Reshape(Var),
    GlobalAvgPool(Var),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. Single-threaded; build one tape
/// per worker.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        kind: Op,
        parents: &[Var],
    ) -> Result<Var, EngineError> {
        if !value.is_finite() {
            return Err(EngineError::NonFinite { op });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (sa, sb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = match (sa.dims2(), sb.dims2()) {
            (Some(x), Some(y)) if x.1 == y.0 => (x, y),
            _ => {
                return Err(EngineError::shape(
                    "matmul",
                    format!("{:?} · {:?}", sa.shape(), sb.shape()),
                ))
            }
        };
        debug_assert_eq!(k, k2);
        let mut out = vec![0.0; m * n];
        linalg::gemm(m, k, n, sa.data(), false, sb.data(), false, 0.0, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        if self.shape(a) != self.shape(b) {
            return Err(EngineError::shape(
                "add",
                format!("{:?} + {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// `x[r, c] + bias[c]` for a 2-D `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, EngineError> {
        let (xs, bs) = (self.value(x), self.value(bias));
        let cols = match (xs.dims2(), bs.shape()) {
            (Some((_, c)), [b]) if *b == c => c,
            _ => {
                return Err(EngineError::shape(
                    "add_row_bias",
                    format!("{:?} + {:?}", xs.shape(), bs.shape()),
                ))
            }
        };
        let mut value = xs.clone();
        let b = bs.data();
        for row in value.data_mut().chunks_mut(cols) {
            for (v, bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        self.push("add_row_bias", value, Op::AddRowBias(x, bias), &[x, bias])
    }

    /// `x[c, h, w] + bias[c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var, EngineError> {
        let (xs, bs) = (self.value(x), self.value(bias));
        let c = match (xs.shape(), bs.shape()) {
            ([c, _, _], [b]) if b == c => *c,
            _ => {
                return Err(EngineError::shape(
                    "add_channel_bias",
                    format!("{:?} + {:?}", xs.shape(), bs.shape()),
                ))
            }
        };
        let plane = xs.len() / c.max(1);
        let mut value = xs.clone();
        for (ch, chunk) in value.data_mut().chunks_mut(plane.max(1)).enumerate() {
            let b = bs.data()[ch];
            for v in chunk {
                *v += b;
            }
        }
        self.push(
            "add_channel_bias",
            value,
            Op::AddChannelBias(x, bias),
            &[x, bias],
        )
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, EngineError> {
        let value = self.value(x).map(|v| v * s);
        self.push("scale", value, Op::Scale(x, s), &[x])
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var, EngineError> {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push("activation", value, Op::Activation(x, kind), &[x])
    }

    /// Cross-correlation of `input` (`C_in × H × W`) with `kernel`
    /// (`C_out × C_in × k × k`), zero padding `padding` on every side.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, EngineError> {
        let (xs, ks) = (self.value(input), self.value(kernel));
        let (geometry, c_out) = match (xs.shape(), ks.shape()) {
            ([c, h, w], [co, ci, k1, k2]) if c == ci && k1 == k2 => {
                match ConvGeometry::new(*c, *h, *w, *k1, stride, padding) {
                    Some(g) => (g, *co),
                    None => {
                        return Err(EngineError::shape(
                            "conv2d",
                            format!("kernel {k1} stride {stride} pad {padding} on {h}×{w}"),
                        ))
                    }
                }
            }
            _ => {
                return Err(EngineError::shape(
                    "conv2d",
                    format!("input {:?} kernel {:?}", xs.shape(), ks.shape()),
                ))
            }
        };
        let cols = linalg::im2col(xs.data(), &geometry);
        let n = geometry.col_cols();
        let mut out = vec![0.0; c_out * n];
        linalg::gemm(
            c_out,
            geometry.col_rows(),
            n,
            ks.data(),
            false,
            &cols,
            false,
            0.0,
            &mut out,
        );
        let value = Tensor::new(vec![c_out, geometry.out_height, geometry.out_width], out)?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                geometry,
                cols,
            },
            &[input, kernel],
        )
    }

    /// Per-channel normalization over the spatial axes of `C × H × W`
    /// (no learned affine).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var, EngineError> {
        let xs = self.value(x);
        let c = match xs.shape() {
            [c, _, _] => *c,
            s => return Err(EngineError::shape("instance_norm", format!("{s:?}"))),
        };
        let plane = xs.len() / c.max(1);
        let mut value = xs.clone();
        let mut inv_std = Vec::with_capacity(c);
        for chunk in value.data_mut().chunks_mut(plane.max(1)) {
            let n = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for v in chunk.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(
            "instance_norm",
            value,
            Op::InstanceNorm { input: x, inv_std },
            &[x],
        )
    }

    /// Sparse product `Â · X` with a fixed normalized adjacency.
    pub fn spmm(&mut self, adj: &Arc<NormalizedAdjacency>, x: Var) -> Result<Var, EngineError> {
        let xs = self.value(x);
        let cols = match xs.dims2() {
            Some((r, c)) if r == adj.num_nodes => c,
            _ => {
                return Err(EngineError::shape(
                    "spmm",
                    format!("{} nodes vs {:?}", adj.num_nodes, xs.shape()),
                ))
            }
        };
        let mut out = vec![0.0; adj.num_nodes * cols];
        let src = xs.data();
        for (i, dst) in out.chunks_mut(cols.max(1)).enumerate().take(adj.num_nodes) {
            for (j, w) in adj.row(i) {
                for (d, s) in dst.iter_mut().zip(&src[j * cols..(j + 1) * cols]) {
                    *d += w * s;
                }
            }
        }
        let value = Tensor::new(vec![adj.num_nodes, cols], out)?;
        self.push(
            "spmm",
            value,
            Op::SpMM {
                adj: Arc::clone(adj),
                input: x,
            },
            &[x],
        )
    }

    /// Graph convolution `Â · H · W`; the activation is left to the caller.
    pub fn gcn_conv(
        &mut self,
        adj: &Arc<NormalizedAdjacency>,
        h: Var,
        w: Var,
    ) -> Result<Var, EngineError> {
        let hw = self.matmul(h, w)?;
        self.spmm(adj, hw)
    }

    /// Appends the same `noise` vector to every row of `rows` (`v × f` →
    /// `v × (f + d)`).
    pub fn concat_noise(&mut self, rows: Var, noise: Var) -> Result<Var, EngineError> {
        let (rs, ns) = (self.value(rows), self.value(noise));
        let (v, f) = match (rs.dims2(), ns.shape()) {
            (Some(d), [_]) => d,
            _ => {
                return Err(EngineError::shape(
                    "concat_noise",
                    format!("{:?} ++ {:?}", rs.shape(), ns.shape()),
                ))
            }
        };
        let d = ns.len();
        let mut out = Vec::with_capacity(v * (f + d));
        for i in 0..v {
            out.extend_from_slice(&rs.data()[i * f..(i + 1) * f]);
            out.extend_from_slice(ns.data());
        }
        let value = Tensor::new(vec![v, f + d], out)?;
        self.push(
            "concat_noise",
            value,
            Op::ConcatNoise { rows, noise },
            &[rows, noise],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var, EngineError> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// `C × H × W` → `C` by averaging each channel.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, EngineError> {
        let xs = self.value(x);
        let c = match xs.shape() {
            [c, _, _] => *c,
            s => return Err(EngineError::shape("global_avg_pool", format!("{s:?}"))),
        };
        let plane = xs.len() / c.max(1);
        let value = Tensor::vector(
            xs.data()
                .chunks(plane.max(1))
                .map(|ch| ch.iter().sum::<f64>() / plane as f64)
                .collect(),
        );
        self.push("global_avg_pool", value, Op::GlobalAvgPool(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, EngineError> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, EngineError> {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push("mean", value, Op::Mean(x), &[x])
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(EngineError::shape(
                "mse",
                format!("{:?} vs {:?}", x.shape(), y.shape()),
            ));
        }
        let s: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        let value = Tensor::scalar(s / x.len() as f64);
        self.push("mse", value, Op::Mse(a, b), &[a, b])
    }

    /// Numerically stable mean binary cross-entropy on logits.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, EngineError> {
        let x = self.value(logits);
        if x.len() != targets.len() {
            return Err(EngineError::shape(
                "bce_with_logits",
                format!("{} logits vs {} targets", x.len(), targets.len()),
            ));
        }
        let loss = x
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / x.len() as f64;
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    /// Records an externally computed function of `inputs` together with its
    /// backward rule.
    pub fn custom(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: Tensor,
        backward: CustomBackward,
    ) -> Result<Var, EngineError> {
        self.push(
            name,
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            inputs,
        )
    }

    /// Backpropagates from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, EngineError> {
        let v = self.value(output);
        if v.len() != 1 {
            return Err(EngineError::shape(
                "backward",
                format!("expected scalar output, got {:?}", v.shape()),
            ));
        }
        self.backward_with(output, Tensor::full(v.shape().to_vec(), 1.0))
    }

    /// Backpropagates an explicit output gradient `seed`.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients, EngineError> {
        if seed.shape() != self.shape(output) {
            return Err(EngineError::shape(
                "backward",
                format!(
                    "seed {:?} for output {:?}",
                    seed.shape(),
                    self.shape(output)
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
            // leaf-side and intermediate gradients stay queryable
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2().expect("2-D");
                let n = bv.shape()[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    linalg::gemm(m, n, k, g.data(), false, bv.data(), true, 0.0, &mut da);
                    accumulate(&mut grads[a.0], Tensor::new(vec![m, k], da).expect("shape"));
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    linalg::gemm(k, m, n, av.data(), true, g.data(), false, 0.0, &mut db);
                    accumulate(&mut grads[b.0], Tensor::new(vec![k, n], db).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                for p in [a, b] {
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], g.clone());
                    }
                }
            }
            Op::AddRowBias(x, bias) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if self.wants(*bias) {
                    let cols = self.value(*bias).len();
                    let mut db = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], Tensor::vector(db));
                }
            }
            Op::AddChannelBias(x, bias) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if self.wants(*bias) {
                    let c = self.value(*bias).len();
                    let plane = g.len() / c.max(1);
                    let db = g
                        .data()
                        .chunks(plane.max(1))
                        .map(|ch| ch.iter().sum())
                        .collect();
                    accumulate(&mut grads[bias.0], Tensor::vector(db));
                }
            }
            Op::Scale(x, s) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.map(|v| v * s));
                }
            }
            Op::Activation(x, kind) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let mut d = g.clone();
                    for ((dv, &xi), &yi) in d
                        .data_mut()
                        .iter_mut()
                        .zip(xv.data())
                        .zip(node.value.data())
                    {
                        *dv *= kind.derivative(xi, yi);
                    }
                    accumulate(&mut grads[x.0], d);
                }
            }
            Op::Conv2d {
                input,
                kernel,
                geometry,
                cols,
            } => {
                let kv = self.value(*kernel);
                let c_out = kv.shape()[0];
                let rows = geometry.col_rows();
                let n = geometry.col_cols();
                if self.wants(*kernel) {
                    let mut dk = vec![0.0; c_out * rows];
                    linalg::gemm(c_out, n, rows, g.data(), false, cols, true, 0.0, &mut dk);
                    accumulate(
                        &mut grads[kernel.0],
                        Tensor::new(kv.shape().to_vec(), dk).expect("shape"),
                    );
                }
                if self.wants(*input) {
                    let mut dcols = vec![0.0; rows * n];
                    linalg::gemm(
                        rows,
                        c_out,
                        n,
                        kv.data(),
                        true,
                        g.data(),
                        false,
                        0.0,
                        &mut dcols,
                    );
                    let dx = linalg::col2im(&dcols, geometry);
                    accumulate(
                        &mut grads[input.0],
                        Tensor::new(self.value(*input).shape().to_vec(), dx).expect("shape"),
                    );
                }
            }
            Op::InstanceNorm { input, inv_std } => {
                if self.wants(*input) {
                    let c = inv_std.len();
                    let plane = g.len() / c.max(1);
                    let mut dx = vec![0.0; g.len()];
                    for (ch, &s) in inv_std.iter().enumerate() {
                        let r = ch * plane..(ch + 1) * plane;
                        let gy = &g.data()[r.clone()];
                        let y = &node.value.data()[r.clone()];
                        let n = plane as f64;
                        let sum_g: f64 = gy.iter().sum();
                        let sum_gy: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum();
                        let k = s / n;
                        for ((d, &gi), &yi) in dx[r].iter_mut().zip(gy).zip(y) {
                            *d = k * (n * gi - sum_g - yi * sum_gy);
                        }
                    }
                    accumulate(
                        &mut grads[input.0],
                        Tensor::new(g.shape().to_vec(), dx).expect("shape"),
                    );
                }
            }
            Op::SpMM { adj, input } => {
                if self.wants(*input) {
                    let cols = g.shape()[1];
                    let mut dx = vec![0.0; g.len()];
                    for i in 0..adj.num_nodes {
                        let gi = &g.data()[i * cols..(i + 1) * cols];
                        for (j, w) in adj.row(i) {
                            for (d, v) in dx[j * cols..(j + 1) * cols].iter_mut().zip(gi) {
                                *d += w * v;
                            }
                        }
                    }
                    accumulate(
                        &mut grads[input.0],
                        Tensor::new(g.shape().to_vec(), dx).expect("shape"),
                    );
                }
            }
            Op::ConcatNoise { rows, noise } => {
                let (v, f) = self.value(*rows).dims2().expect("2-D");
                let d = self.value(*noise).len();
                if self.wants(*rows) {
                    let mut dr = Vec::with_capacity(v * f);
                    for i in 0..v {
                        dr.extend_from_slice(&g.data()[i * (f + d)..i * (f + d) + f]);
                    }
                    accumulate(
                        &mut grads[rows.0],
                        Tensor::new(vec![v, f], dr).expect("shape"),
                    );
                }
                if self.wants(*noise) {
                    let mut dn = vec![0.0; d];
                    for i in 0..v {
                        for (a, b) in dn
                            .iter_mut()
                            .zip(&g.data()[i * (f + d) + f..(i + 1) * (f + d)])
                        {
                            *a += b;
                        }
                    }
                    accumulate(&mut grads[noise.0], Tensor::vector(dn));
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(
                        &mut grads[x.0],
                        g.clone().reshape(shape).expect("same count"),
                    );
                }
            }
            Op::GlobalAvgPool(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let c = xv.shape()[0];
                    let plane = xv.len() / c.max(1);
                    let mut dx = Vec::with_capacity(xv.len());
                    for &gc in g.data() {
                        dx.extend(std::iter::repeat_n(gc / plane as f64, plane));
                    }
                    accumulate(
                        &mut grads[x.0],
                        Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
                    );
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads[x.0], Tensor::full(shape, g.item()));
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    accumulate(
                        &mut grads[x.0],
                        Tensor::full(xv.shape().to_vec(), g.item() / xv.len() as f64),
                    );
                }
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / av.len() as f64;
                let diff: Vec<f64> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(p, q)| k * (p - q))
                    .collect();
                let shape = av.shape().to_vec();
                if self.wants(*b) {
                    let neg = diff.iter().map(|v| -v).collect();
                    accumulate(
                        &mut grads[b.0],
                        Tensor::new(shape.clone(), neg).expect("shape"),
                    );
                }
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], Tensor::new(shape, diff).expect("shape"));
                }
            }
            Op::BceWithLogits { logits, targets } => {
                if self.wants(*logits) {
                    let xv = self.value(*logits);
                    let k = g.item() / xv.len() as f64;
                    let d = xv
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&z, &t)| k * (sigmoid(z) - t))
                        .collect();
                    accumulate(
                        &mut grads[logits.0],
                        Tensor::new(xv.shape().to_vec(), d).expect("shape"),
                    );
                }
            }
            Op::Custom { inputs, backward } => {
                let parts = backward(g);
                debug_assert_eq!(parts.len(), inputs.len());
                for (p, d) in inputs.iter().zip(parts) {
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], d);
                    }
                }
            }
        }
    }
}
