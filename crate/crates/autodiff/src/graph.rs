//! Per-example computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] borrows a [`ParamStore`] read-only, records every operation
//! as a node in creation order (which is already a topological order), and
//! [`Graph::backward`] walks the nodes in reverse, adding parameter
//! gradients into a caller-owned [`Gradients`]. Build a fresh graph per
//! example; shapes of trees differ from sentence to sentence.

use std::mem;

use crate::tensor::{axpy, dot};
use crate::{AutodiffError, Gradients, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Hadamard(NodeId, NodeId),
    Scale(f64, NodeId),
    /// `ty[k*m + i] = Σ_j T[k,i,j] y[j]` is kept from the forward pass.
    Bilinear {
        x: NodeId,
        t: NodeId,
        y: NodeId,
        ty: Vec<f64>,
    },
    Row {
        table: NodeId,
        index: usize,
    },
    Sum(NodeId),
    SoftmaxNll {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    L2(f64),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    requires_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn value_of<'a>(nodes: &'a [Node], store: &'a ParamStore, id: NodeId) -> &'a Tensor {
    let node = &nodes[id.0];
    match (&node.value, &node.op) {
        (Some(v), _) => v,
        (None, Op::Param(p)) => store.value(*p),
        (None, _) => unreachable!("non-parameter node without a value"),
    }
}

fn mismatch(expected: &[usize], got: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch { expected: expected.to_vec(), got: got.to_vec() }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph { store, nodes: Vec::with_capacity(256), param_nodes: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        value_of(&self.nodes, self.store, id)
    }

    /// The single value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    fn check(&self, id: NodeId) -> Result<&Tensor, AutodiffError> {
        if id.0 >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(id.0));
        }
        Ok(self.value(id))
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { op, value: Some(value), requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Input, value: Some(value), requires_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    /// The node for parameter `id`, created on first use.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.index()] {
            return n;
        }
        self.nodes.push(Node { op: Op::Param(id), value: None, requires_grad: true });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.index()] = Some(n);
        n
    }

    /// Matrix-vector (`[m,n]·[n] → [m]`) or matrix-matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let av = self.check(a)?;
        let bv = self.check(b)?;
        if av.rank() != 2 || bv.rank() > 2 || av.shape()[1] != bv.shape()[0] {
            return Err(mismatch(&[av.shape().get(1).copied().unwrap_or(0)], bv.shape()));
        }
        let (m, n) = (av.shape()[0], av.shape()[1]);
        let value = if bv.rank() == 1 {
            let x = bv.data();
            let out = av.data().chunks_exact(n).map(|row| dot(row, x)).collect();
            Tensor::from_parts(vec![m], out)
        } else {
            let p = bv.shape()[1];
            let mut out = vec![0.0; m * p];
            for (r, arow) in av.data().chunks_exact(n).enumerate() {
                let orow = &mut out[r * p..(r + 1) * p];
                for (k, &aik) in arow.iter().enumerate() {
                    axpy(aik, &bv.data()[k * p..(k + 1) * p], orow);
                }
            }
            Tensor::from_parts(vec![m, p], out)
        };
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> Result<(&Tensor, &Tensor), AutodiffError> {
        let av = self.check(a)?;
        let bv = self.check(b)?;
        if av.shape() != bv.shape() {
            return Err(mismatch(av.shape(), bv.shape()));
        }
        Ok((av, bv))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = self.same_shape(a, b)?;
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (av, bv) = self.same_shape(a, b)?;
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        Ok(self.push(Op::Hadamard(a, b), value, &[a, b]))
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let av = self.check(a)?;
        let bv = self.check(b)?;
        if av.rank() != 1 || bv.rank() != 1 {
            return Err(mismatch(&[av.len()], if av.rank() != 1 { av.shape() } else { bv.shape() }));
        }
        let mut out = Vec::with_capacity(av.len() + bv.len());
        out.extend_from_slice(av.data());
        out.extend_from_slice(bv.data());
        Ok(self.push(Op::Concat(a, b), Tensor::vector(out), &[a, b]))
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId, AutodiffError> {
        let av = self.check(a)?;
        let value = Tensor::from_parts(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect());
        Ok(self.push(op, value, &[a]))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn scale(&mut self, c: f64, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.map(a, Op::Scale(c, a), |x| c * x)
    }

    /// `out[k] = Σ_ij x[i] T[k,i,j] y[j]` for `T: [n,m,m]`.
    pub fn bilinear(&mut self, x: NodeId, t: NodeId, y: NodeId) -> Result<NodeId, AutodiffError> {
        let xv = self.check(x)?;
        let tv = self.check(t)?;
        let yv = self.check(y)?;
        if tv.rank() != 3 {
            return Err(AutodiffError::BadShape(tv.shape().to_vec()));
        }
        let (mi, mj) = (tv.shape()[1], tv.shape()[2]);
        if xv.shape() != [mi] {
            return Err(mismatch(&[mi], xv.shape()));
        }
        if yv.shape() != [mj] {
            return Err(mismatch(&[mj], yv.shape()));
        }
        let yd = yv.data();
        let ty: Vec<f64> = tv.data().chunks_exact(mj).map(|row| dot(row, yd)).collect();
        let out = ty.chunks_exact(mi).map(|tyk| dot(tyk, xv.data())).collect();
        Ok(self.push(Op::Bilinear { x, t, y, ty }, Tensor::vector(out), &[x, t, y]))
    }

    /// Row `index` of a matrix, as a vector. Used for embedding lookup.
    pub fn row(&mut self, table: NodeId, index: usize) -> Result<NodeId, AutodiffError> {
        let tv = self.check(table)?;
        if tv.rank() != 2 || index >= tv.shape()[0] {
            return Err(mismatch(&[index + 1, 0], tv.shape()));
        }
        let d = tv.shape()[1];
        let value = Tensor::vector(tv.data()[index * d..(index + 1) * d].to_vec());
        Ok(self.push(Op::Row { table, index }, value, &[table]))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let s = self.check(a)?.data().iter().sum();
        Ok(self.push(Op::Sum(a), Tensor::scalar(s), &[a]))
    }

    /// `-log softmax(logits)[target]`, stabilized by subtracting the max.
    pub fn softmax_nll(&mut self, logits: NodeId, target: usize) -> Result<NodeId, AutodiffError> {
        let lv = self.check(logits)?;
        if lv.rank() != 1 || target >= lv.len() {
            return Err(mismatch(&[target + 1], lv.shape()));
        }
        let (probs, loss) = softmax_and_nll(lv.data(), target);
        Ok(self.push(Op::SoftmaxNll { logits, target, probs }, Tensor::scalar(loss), &[logits]))
    }

    /// `λ/2 · Σ w²` over every parameter in the store.
    pub fn l2_penalty(&mut self, lambda: f64) -> NodeId {
        let v = self.store.l2_penalty(lambda);
        self.nodes.push(Node { op: Op::L2(lambda), value: Some(Tensor::scalar(v)), requires_grad: true });
        NodeId(self.nodes.len() - 1)
    }

    /// Backpropagates from a scalar node, adding `seed · ∂loss/∂θ` into `grads`.
    pub fn backward(&self, loss: NodeId, seed: f64, grads: &mut Gradients) -> Result<(), AutodiffError> {
        let lv = self.check(loss)?;
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut ctx =
            Backward { nodes: &self.nodes, store: self.store, node_grads: vec![Vec::new(); loss.0 + 1], grads };
        if let Some(t) = ctx.target(loss) {
            t[0] += seed;
        }
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let g = mem::take(&mut ctx.node_grads[id]);
            if g.is_empty() {
                continue;
            }
            ctx.propagate(id, &g);
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax probabilities and the negative log-likelihood of `target`.
pub fn softmax_and_nll(logits: &[f64], target: usize) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[target] - max);
    (exps.into_iter().map(|e| e / total).collect(), loss)
}

struct Backward<'a, 'g> {
    nodes: &'a [Node],
    store: &'a ParamStore,
    node_grads: Vec<Vec<f64>>,
    grads: &'g mut Gradients,
}

impl Backward<'_, '_> {
    /// Gradient buffer for `id`, or `None` if nothing upstream needs it.
    fn target(&mut self, id: NodeId) -> Option<&mut [f64]> {
        let node = &self.nodes[id.0];
        if !node.requires_grad {
            return None;
        }
        if let Op::Param(p) = node.op {
            return Some(self.grads.get_mut(p));
        }
        let buf = &mut self.node_grads[id.0];
        if buf.is_empty() {
            let n = node.value.as_ref().map_or(0, Tensor::len);
            *buf = vec![0.0; n];
        }
        Some(buf)
    }

    fn accumulate(&mut self, id: NodeId, contrib: impl IntoIterator<Item = f64>) {
        if let Some(t) = self.target(id) {
            for (ti, c) in t.iter_mut().zip(contrib) {
                *ti += c;
            }
        }
    }

    fn propagate(&mut self, id: usize, g: &[f64]) {
        let nodes = self.nodes;
        let store = self.store;
        let val = |n: NodeId| value_of(nodes, store, n);
        let out = nodes[id].value.as_ref();
        match &nodes[id].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let n = av.shape()[1];
                if bv.rank() == 1 {
                    if let Some(gb) = self.target(*b) {
                        for (row, &gr) in av.data().chunks_exact(n).zip(g) {
                            axpy(gr, row, gb);
                        }
                    }
                    if let Some(ga) = self.target(*a) {
                        for (grow, &gr) in ga.chunks_exact_mut(n).zip(g) {
                            axpy(gr, bv.data(), grow);
                        }
                    }
                } else {
                    let p = bv.shape()[1];
                    // dB[k,:] += Σ_r A[r,k] g[r,:]
                    if let Some(gb) = self.target(*b) {
                        for (arow, grow) in av.data().chunks_exact(n).zip(g.chunks_exact(p)) {
                            for (k, &ark) in arow.iter().enumerate() {
                                axpy(ark, grow, &mut gb[k * p..(k + 1) * p]);
                            }
                        }
                    }
                    // dA[r,k] += g[r,:] · B[k,:]
                    if let Some(ga) = self.target(*a) {
                        for (garow, grow) in ga.chunks_exact_mut(n).zip(g.chunks_exact(p)) {
                            for (k, gak) in garow.iter_mut().enumerate() {
                                *gak += dot(grow, &bv.data()[k * p..(k + 1) * p]);
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.iter().copied());
                self.accumulate(*b, g.iter().copied());
            }
            Op::Concat(a, b) => {
                let la = val(*a).len();
                self.accumulate(*a, g[..la].iter().copied());
                self.accumulate(*b, g[la..].iter().copied());
            }
            Op::Tanh(a) => {
                let y = out.expect("tanh value").data();
                self.accumulate(*a, g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)));
            }
            Op::Sigmoid(a) => {
                let y = out.expect("sigmoid value").data();
                self.accumulate(*a, g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)));
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                self.accumulate(*a, g.iter().zip(bv).map(|(gi, y)| gi * y));
                self.accumulate(*b, g.iter().zip(av).map(|(gi, x)| gi * x));
            }
            Op::Scale(c, a) => {
                self.accumulate(*a, g.iter().map(|gi| c * gi));
            }
            Op::Bilinear { x, t, y, ty } => {
                let (xv, tv, yv) = (val(*x).data(), val(*t), val(*y).data());
                let (mi, mj) = (tv.shape()[1], tv.shape()[2]);
                // dx[i] = Σ_k g[k] ty[k,i]
                let mut gx = vec![0.0; mi];
                for (tyk, &gk) in ty.chunks_exact(mi).zip(g) {
                    axpy(gk, tyk, &mut gx);
                }
                // dy[j] = Σ_k Σ_i g[k] x[i] T[k,i,j]
                let mut gy = vec![0.0; mj];
                for (tk, &gk) in tv.data().chunks_exact(mi * mj).zip(g) {
                    for (row, &xi) in tk.chunks_exact(mj).zip(xv) {
                        axpy(gk * xi, row, &mut gy);
                    }
                }
                // dT[k,i,j] = g[k] x[i] y[j]
                if let Some(gt) = self.target(*t) {
                    for (gtk, &gk) in gt.chunks_exact_mut(mi * mj).zip(g) {
                        for (grow, &xi) in gtk.chunks_exact_mut(mj).zip(xv) {
                            axpy(gk * xi, yv, grow);
                        }
                    }
                }
                self.accumulate(*x, gx);
                self.accumulate(*y, gy);
            }
            Op::Row { table, index } => {
                let d = g.len();
                if let Some(gt) = self.target(*table) {
                    axpy(1.0, g, &mut gt[index * d..(index + 1) * d]);
                }
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                self.accumulate(*a, std::iter::repeat_n(g[0], n));
            }
            Op::SoftmaxNll { logits, target, probs } => {
                let g0 = g[0];
                let contrib = probs.iter().enumerate().map(|(k, p)| g0 * (p - if k == *target { 1.0 } else { 0.0 }));
                self.accumulate(*logits, contrib);
            }
            Op::L2(lambda) => {
                let c = g[0] * lambda;
                for (pid, p) in store.iter() {
                    axpy(c, p.value.data(), self.grads.get_mut(pid));
                }
            }
        }
    }
}
