//! Reverse-mode differentiation over a recorded tape of tensor operations.
//!
//! A [`Tape`] is built forward: every method appends one node holding the
//! computed value and the operation that produced it. [`Tape::backward`]
//! then walks the nodes once, last to first, accumulating adjoints and
//! collecting them for every parameter leaf into [`Gradients`].
//!
//! ```
//! use bdqn::params::ParamStore;
//! use bdqn::tape::Tape;
//! use bdqn::tensor::Tensor;
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::matrix(1, 2, vec![2.0, -1.0]).unwrap());
//!
//! let mut tape = Tape::new();
//! let x = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
//! let wn = tape.param(&store, w);
//! let y = tape.matmul(wn, x).unwrap();
//! let loss = tape.sum(y).unwrap();
//! assert_eq!(tape.value(loss).item(), 2.0);
//!
//! let grads = tape.backward_scalar(&store, loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[3.0, 4.0]);
//! ```

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId, NodeId),
    MulScalar(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Recip(NodeId),
    Gather(NodeId, Vec<usize>),
    Sum(NodeId),
    Mean(NodeId),
    LogSumExp(Vec<NodeId>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation; also serves as the forward-pass result holder.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    binding: Option<(u64, u64)>,
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("tape op `{name}`")));
        }
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddScalar(a, b)
            | Op::MulScalar(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Recip(a)
            | Op::Gather(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => self.nodes[a.0].needs_grad,
            Op::LogSumExp(xs) => xs.iter().any(|x| self.nodes[x.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf bound to a parameter; the tape remembers the store's version.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let key = (store.store_id(), store.version());
        match self.binding {
            None => self.binding = Some(key),
            Some(prev) => debug_assert_eq!(prev, key, "tape mixes parameter stores or versions"),
        }
        self.nodes.push(Node {
            value: store.get(id).clone(),
            op: Op::Param(id),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.matmul(vb)?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// Adds a length-`n` bias to every row of an `[m,n]` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let n = vx.cols();
        if vx.shape().len() != 2 || vb.shape() != [n] {
            return Err(Error::shape("add_bias", &[n], vb.shape()));
        }
        let mut out = vx.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddBias(x, bias), "add_bias")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    fn scalar_of(&self, s: NodeId, op: &'static str) -> Result<f64> {
        let v = self.value(s);
        if v.shape() != [1] {
            return Err(Error::shape(op, &[1], v.shape()));
        }
        Ok(v.item())
    }

    /// Adds a one-element node to every entry of `x`.
    pub fn add_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let c = self.scalar_of(s, "add_scalar")?;
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddScalar(x, s), "add_scalar")
    }

    /// Multiplies every entry of `x` by a one-element node.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let c = self.scalar_of(s, "mul_scalar")?;
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::MulScalar(x, s), "mul_scalar")
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), "scale")
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddConst(x), "add_const")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(softplus_scalar);
        self.push(out, Op::Softplus(x), "softplus")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(f64::ln);
        self.push(out, Op::Log(x), "log")
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x), "exp")
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x), "square")
    }

    pub fn recip(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).map(|v| 1.0 / v);
        self.push(out, Op::Recip(x), "recip")
    }

    /// Picks column `idx[i]` from row `i` of an `[m,n]` matrix, giving `[m]`.
    pub fn gather(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId> {
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        if vx.shape().len() != 2 || idx.len() != m {
            return Err(Error::shape("gather", &[m], &[idx.len()]));
        }
        let mut out = Vec::with_capacity(m);
        for (i, &j) in idx.iter().enumerate() {
            if j >= n {
                return Err(Error::IndexOutOfRange {
                    what: "gather column",
                    index: j,
                    len: n,
                });
            }
            out.push(vx.data()[i * n + j]);
        }
        self.push(Tensor::vector(out), Op::Gather(x, idx.to_vec()), "gather")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::InvalidArgument("mean of empty tensor".into()));
        }
        let s = v.sum() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), "mean")
    }

    /// Elementwise `log Σ_i exp(x_i)` across equally shaped inputs,
    /// shifted by the running maximum.
    pub fn log_sum_exp(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("log_sum_exp of no inputs".into()))?;
        let shape = self.value(*first).shape().to_vec();
        for x in xs {
            self.value(*x).ensure_shape("log_sum_exp", &shape)?;
        }
        let len = self.value(*first).len();
        let mut out = vec![0.0; len];
        for (j, o) in out.iter_mut().enumerate() {
            let m = xs
                .iter()
                .map(|x| self.value(*x).data()[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = xs.iter().map(|x| (self.value(*x).data()[j] - m).exp()).sum();
            *o = m + s.ln();
        }
        let out = Tensor::new(shape, out)?;
        self.push(out, Op::LogSumExp(xs.to_vec()), "log_sum_exp")
    }

    /// Backward pass from a one-element output.
    pub fn backward_scalar(&self, store: &ParamStore, output: NodeId) -> Result<Gradients> {
        self.backward(store, output, &Tensor::scalar(1.0))
    }

    /// Propagates `seed` (shaped like `output`) back to every parameter leaf
    /// on the path. Each node is visited once, in reverse recording order.
    pub fn backward(&self, store: &ParamStore, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        if let Some((sid, ver)) = self.binding {
            if sid != store.store_id() {
                return Err(Error::ForeignTape);
            }
            if ver != store.version() {
                return Err(Error::StaleTape {
                    recorded: ver,
                    current: store.version(),
                });
            }
        }
        seed.ensure_shape("backward seed", self.value(output).shape())?;
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(seed.clone());
        let mut grads = Gradients::new();

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => grads.accumulate(*pid, &g, 1.0)?,
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    if self.nodes[a.0].needs_grad {
                        let mut ga = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, vb.data(), true, &mut ga, false);
                        acc(&mut adj, *a, Tensor::new(va.shape().to_vec(), ga)?)?;
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut gb = vec![0.0; k * n];
                        gemm(k, m, n, va.data(), true, g.data(), false, &mut gb, false);
                        acc(&mut adj, *b, Tensor::new(vb.shape().to_vec(), gb)?)?;
                    }
                }
                Op::AddBias(x, b) => {
                    if self.nodes[b.0].needs_grad {
                        let n = g.cols();
                        let mut gb = vec![0.0; n];
                        for row in g.data().chunks(n) {
                            for (s, v) in gb.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        acc(&mut adj, *b, Tensor::vector(gb))?;
                    }
                    if self.nodes[x.0].needs_grad {
                        acc(&mut adj, *x, g)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].needs_grad {
                        acc(&mut adj, *b, g.clone())?;
                    }
                    if self.nodes[a.0].needs_grad {
                        acc(&mut adj, *a, g)?;
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[b.0].needs_grad {
                        acc(&mut adj, *b, g.map(|v| -v))?;
                    }
                    if self.nodes[a.0].needs_grad {
                        acc(&mut adj, *a, g)?;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        acc(&mut adj, *a, g.zip_map(vb, "mul'", |x, y| x * y)?)?;
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(&mut adj, *b, g.zip_map(va, "mul'", |x, y| x * y)?)?;
                    }
                }
                Op::AddScalar(x, s) => {
                    if self.nodes[s.0].needs_grad {
                        acc(&mut adj, *s, Tensor::scalar(g.sum()))?;
                    }
                    if self.nodes[x.0].needs_grad {
                        acc(&mut adj, *x, g)?;
                    }
                }
                Op::MulScalar(x, s) => {
                    let c = self.value(*s).item();
                    if self.nodes[s.0].needs_grad {
                        let d: f64 = g.data().iter().zip(self.value(*x).data()).map(|(a, b)| a * b).sum();
                        acc(&mut adj, *s, Tensor::scalar(d))?;
                    }
                    if self.nodes[x.0].needs_grad {
                        acc(&mut adj, *x, g.map(|v| v * c))?;
                    }
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    acc(&mut adj, *x, g.map(|v| v * c))?;
                }
                Op::AddConst(x) => acc(&mut adj, *x, g)?,
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), "relu'", |g, x| if x > 0.0 { g } else { 0.0 })?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Softplus(x) => {
                    let gx = g.zip_map(self.value(*x), "softplus'", |g, x| g * sigmoid_scalar(x))?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, "sigmoid'", |g, y| g * y * (1.0 - y))?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Log(x) => {
                    let gx = g.zip_map(self.value(*x), "log'", |g, x| g / x)?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Exp(x) => {
                    let gx = g.zip_map(&node.value, "exp'", |g, y| g * y)?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Square(x) => {
                    let gx = g.zip_map(self.value(*x), "square'", |g, x| 2.0 * g * x)?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Recip(x) => {
                    let gx = g.zip_map(&node.value, "recip'", |g, y| -g * y * y)?;
                    acc(&mut adj, *x, gx)?;
                }
                Op::Gather(x, idx) => {
                    let vx = self.value(*x);
                    let n = vx.cols();
                    let mut gx = Tensor::zeros(vx.shape());
                    for (i, (&j, gv)) in idx.iter().zip(g.data()).enumerate() {
                        gx.data_mut()[i * n + j] += gv;
                    }
                    acc(&mut adj, *x, gx)?;
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    acc(&mut adj, *x, Tensor::filled(self.value(*x).shape(), gv))?;
                }
                Op::Mean(x) => {
                    let vx = self.value(*x);
                    let gv = g.item() / vx.len() as f64;
                    acc(&mut adj, *x, Tensor::filled(vx.shape(), gv))?;
                }
                Op::LogSumExp(xs) => {
                    for x in xs {
                        if !self.nodes[x.0].needs_grad {
                            continue;
                        }
                        let vx = self.value(*x);
                        let mut gx = vx.clone();
                        for ((o, xv), (gv, lse)) in gx
                            .data_mut()
                            .iter_mut()
                            .zip(vx.data())
                            .zip(g.data().iter().zip(node.value.data()))
                        {
                            *o = gv * (xv - lse).exp();
                        }
                        acc(&mut adj, *x, gx)?;
                    }
                }
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("backward pass".into()));
        }
        Ok(grads)
    }
}

fn acc(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
    match &mut adj[id.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values.iter().map(|(n, t)| s.add(*n, t.clone())).collect();
        (s, ids)
    }

    /// Central differences over every entry of every parameter.
    fn numeric(store: &ParamStore, f: &dyn Fn(&ParamStore) -> f64) -> Vec<Vec<f64>> {
        let h = 1e-6;
        let mut out = Vec::new();
        for id in store.ids() {
            let mut g = Vec::new();
            for j in 0..store.get(id).len() {
                let mut plus = store.clone();
                let mut t = plus.get(id).clone();
                t.data_mut()[j] += h;
                plus.set(id, t).unwrap();
                let mut minus = store.clone();
                let mut t = minus.get(id).clone();
                t.data_mut()[j] -= h;
                minus.set(id, t).unwrap();
                g.push((f(&plus) - f(&minus)) / (2.0 * h));
            }
            out.push(g);
        }
        out
    }

    fn check(store: &ParamStore, build: &dyn Fn(&mut Tape, &ParamStore) -> NodeId) {
        let mut tape = Tape::new();
        let out = build(&mut tape, store);
        let grads = tape.backward_scalar(store, out).unwrap();
        let f = |s: &ParamStore| {
            let mut t = Tape::new();
            let o = build(&mut t, s);
            t.value(o).item()
        };
        let num = numeric(store, &f);
        for (id, n) in store.ids().zip(num) {
            let a = grads.get(id).map(|t| t.data().to_vec()).unwrap_or(vec![0.0; n.len()]);
            for (x, y) in a.iter().zip(&n) {
                assert!((x - y).abs() < 1e-6 * (1.0 + y.abs()), "{} analytic {x} numeric {y}", store.name(id));
            }
        }
    }

    #[test]
    fn every_unary_op_matches_finite_differences() {
        let (store, _) = store_with(&[("x", Tensor::vector(vec![0.3, 1.7, 2.2, 0.9]))]);
        let x = ParamId(0);
        check(&store, &|t, s| {
            let p = t.param(s, x);
            let a = t.softplus(p).unwrap();
            let b = t.sigmoid(p).unwrap();
            let c = t.log(p).unwrap();
            let d = t.exp(p).unwrap();
            let e = t.square(p).unwrap();
            let f = t.recip(p).unwrap();
            let g = t.relu(p).unwrap();
            let h = t.scale(p, -0.7).unwrap();
            let i = t.add_const(p, 3.0).unwrap();
            let mut acc = a;
            for n in [b, c, d, e, f, g, h, i] {
                let m = t.mul(acc, n).unwrap();
                acc = t.add(m, n).unwrap();
            }
            t.sum(acc).unwrap()
        });
    }

    #[test]
    fn binary_and_reduction_ops_match_finite_differences() {
        let (store, _) = store_with(&[
            ("w", Tensor::matrix(2, 3, vec![0.1, -0.4, 0.3, 0.8, -0.2, 0.5]).unwrap()),
            ("b", Tensor::vector(vec![0.2, -0.1, 0.05])),
            ("s", Tensor::scalar(0.7)),
        ]);
        check(&store, &|t, s| {
            let x = t.constant(Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap());
            let w = t.param(s, ParamId(0));
            let b = t.param(s, ParamId(1));
            let sc = t.param(s, ParamId(2));
            let y = t.matmul(x, w).unwrap();
            let y = t.add_bias(y, b).unwrap();
            let z = t.mul_scalar(y, sc).unwrap();
            let z = t.add_scalar(z, sc).unwrap();
            let d = t.sub(z, y).unwrap();
            let q = t.gather(d, &[2, 0]).unwrap();
            let sq = t.square(q).unwrap();
            let l1 = t.mean(sq).unwrap();
            let y2 = t.scale(y, 0.5).unwrap();
            let lse = t.log_sum_exp(&[y, z, y2]).unwrap();
            let l2 = t.sum(lse).unwrap();
            t.add(l1, l2).unwrap()
        });
    }

    #[test]
    fn constant_only_path_yields_empty_gradients() {
        let (store, _) = store_with(&[("w", Tensor::scalar(1.0))]);
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let s = tape.sum(c).unwrap();
        let g = tape.backward_scalar(&store, s).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn stale_tape_is_refused() {
        let (mut store, ids) = store_with(&[("w", Tensor::scalar(2.0))]);
        let mut tape = Tape::new();
        let w = tape.param(&store, ids[0]);
        let l = tape.square(w).unwrap();
        store.set(ids[0], Tensor::scalar(3.0)).unwrap();
        assert!(matches!(tape.backward_scalar(&store, l), Err(Error::StaleTape { .. })));
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![-1.0]));
        assert!(matches!(tape.log(c), Err(Error::NonFinite(_))));
    }

    #[test]
    fn log_sum_exp_survives_large_arguments() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1000.0]));
        let b = tape.constant(Tensor::vector(vec![1000.0]));
        let l = tape.log_sum_exp(&[a, b]).unwrap();
        assert!((tape.value(l).item() - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((softplus_scalar(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus_scalar(50.0) - 50.0).abs() < 1e-12);
        let tiny = softplus_scalar(-50.0);
        assert!(tiny > 0.0 && (tiny / (-50f64).exp() - 1.0).abs() < 1e-12);
    }
}
