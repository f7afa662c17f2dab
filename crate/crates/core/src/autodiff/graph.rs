//! Define-by-run tape for reverse-mode differentiation over dense tensors.
//!
//! Every forward call appends a node holding its value and the operation that
//! produced it. [`Graph::backward`] consumes the tape, walks it in reverse and
//! accumulates gradients into the [`ParamSet`] leaves that were recorded with
//! [`Graph::param`]. Leaves from non-trainable groups enter the tape as
//! constants, so frozen parameters are never reachable.

use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Tanh,
    /// `x·σ(x)`.
    Silu,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Silu => x / (S::one() + (-x).exp()),
        }
    }

    /// Derivative given the input `x` and the output `y`.
    fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Activation::Identity => S::one(),
            Activation::Tanh => S::one() - y * y,
            Activation::Silu => {
                let s = S::one() / (S::one() + (-x).exp());
                s + y * (S::one() - s)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, S),
    Act(NodeId, Activation),
    Concat(Vec<NodeId>),
    Mean(NodeId),
    Mse(NodeId, NodeId),
    WeightedSq(NodeId, NodeId, Vec<S>),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn input(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Records a parameter leaf. Parameters of frozen groups become constants.
    pub fn param(&mut self, params: &ParamSet<S>, id: ParamId) -> NodeId {
        let value = params.tensor(id).clone_values();
        if params.is_trainable(id) {
            self.push(value, Op::Param(id), true)
        } else {
            self.push(value, Op::Input, false)
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(Error::shape(
                "matmul",
                format!("operands must be matrices, got {:?} and {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        if tb.shape()[0] != k {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}: inner dimensions differ", ta.shape(), tb.shape()),
            ));
        }
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            S::one(),
            ta.values(),
            (k as isize, 1),
            tb.values(),
            (n as isize, 1),
            S::zero(),
            &mut out,
        );
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// Adds a bias row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a).value, &self.node(bias).value);
        let c = ta.cols();
        if tb.numel() != c {
            return Err(Error::shape(
                "add_bias",
                format!("bias of {} values for {} columns", tb.numel(), c),
            ));
        }
        let mut out = ta.values().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (x, b) in row.iter_mut().zip(tb.values()) {
                *x += *b;
            }
        }
        let shape = ta.shape().to_vec();
        let needs = self.node(a).needs_grad || self.node(bias).needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(a, bias), needs))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let out = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape().to_vec();
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Tensor::new(shape, out)?, op, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        let ta = &self.node(a).value;
        let out = ta.values().iter().map(|&x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), out).expect("same shape");
        let needs = self.node(a).needs_grad;
        self.push(t, Op::Scale(a, c), needs)
    }

    pub fn activation(&mut self, a: NodeId, act: Activation) -> NodeId {
        let ta = &self.node(a).value;
        let out = ta.values().iter().map(|&x| act.apply(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), out).expect("same shape");
        let needs = self.node(a).needs_grad;
        self.push(t, Op::Act(a, act), needs)
    }

    /// Concatenates along the trailing axis; inputs keep their order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let rows = self.node(parts[0]).value.rows();
        let vector = parts.iter().all(|&p| self.node(p).value.shape().len() == 1);
        for &p in parts {
            if self.node(p).value.rows() != rows {
                return Err(Error::shape(
                    "concat",
                    format!(
                        "row counts differ: {:?} vs {:?}",
                        self.node(parts[0]).value.shape(),
                        self.node(p).value.shape()
                    ),
                ));
            }
        }
        let total: usize = parts.iter().map(|&p| self.node(p).value.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.node(p).value.row(r));
            }
        }
        let shape = if vector { vec![total] } else { vec![rows, total] };
        let needs = parts.iter().any(|&p| self.node(p).needs_grad);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), needs))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let ta = &self.node(a).value;
        let n = ta.numel().max(1);
        let s: S = ta.values().iter().copied().sum();
        let needs = self.node(a).needs_grad;
        self.push(Tensor::scalar(s / S::of(n as f64)), Op::Mean(a), needs)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "squared_error",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let n = ta.numel().max(1);
        let s: S = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(Tensor::scalar(s / S::of(n as f64)), Op::Mse(a, b), needs))
    }

    /// Row mean of the diagonal quadratic form `(a−b)ᵀ diag(w) (a−b)`.
    pub fn weighted_sq(&mut self, a: NodeId, b: NodeId, weights: &[S]) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        if ta.shape() != tb.shape() || ta.cols() != weights.len() {
            return Err(Error::shape(
                "weighted_squared_error",
                format!(
                    "{:?} vs {:?} with {} weights",
                    ta.shape(),
                    tb.shape(),
                    weights.len()
                ),
            ));
        }
        let c = weights.len().max(1);
        let rows = ta.rows().max(1);
        let mut s = S::zero();
        for (ra, rb) in ta.values().chunks(c).zip(tb.values().chunks(c)) {
            for ((&x, &y), &w) in ra.iter().zip(rb).zip(weights) {
                s += w * (x - y) * (x - y);
            }
        }
        let needs = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push(
            Tensor::scalar(s / S::of(rows as f64)),
            Op::WeightedSq(a, b, weights.to_vec()),
            needs,
        ))
    }

    /// Reverse sweep from a scalar output; writes gradients into `params`.
    ///
    /// The tape is consumed. Parameters that the output does not depend on are
    /// left untouched.
    pub fn backward(self, output: NodeId, params: &mut ParamSet<S>) -> Result<()> {
        let out = &self.nodes[output.0].value;
        if out.numel() != 1 {
            return Err(Error::NonScalarBackward(out.shape().to_vec()));
        }
        if !self.nodes[output.0].needs_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<S>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![S::one()]);

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => params.accumulate_grad(*id, &g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if self.nodes[a.0].needs_grad {
                        let da = slot(&mut adj, *a, m * k);
                        S::gemm(
                            m,
                            n,
                            k,
                            S::one(),
                            &g,
                            (n as isize, 1),
                            tb.values(),
                            (1, n as isize),
                            S::one(),
                            da,
                        );
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = slot(&mut adj, *b, k * n);
                        S::gemm(
                            k,
                            m,
                            n,
                            S::one(),
                            ta.values(),
                            (1, k as isize),
                            &g,
                            (n as isize, 1),
                            S::one(),
                            db,
                        );
                    }
                }
                Op::AddBias(a, bias) => {
                    let c = self.nodes[i].value.cols().max(1);
                    if self.nodes[a.0].needs_grad {
                        add_into(slot(&mut adj, *a, g.len()), &g);
                    }
                    if self.nodes[bias.0].needs_grad {
                        let db = slot(&mut adj, *bias, c);
                        for row in g.chunks(c) {
                            add_into(db, row);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for x in [a, b] {
                        if self.nodes[x.0].needs_grad {
                            add_into(slot(&mut adj, *x, g.len()), &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        add_into(slot(&mut adj, *a, g.len()), &g);
                    }
                    if self.nodes[b.0].needs_grad {
                        for (d, &v) in slot(&mut adj, *b, g.len()).iter_mut().zip(&g) {
                            *d -= v;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value.values(), self.nodes[b.0].value.values());
                    if self.nodes[a.0].needs_grad {
                        let d = slot(&mut adj, *a, g.len());
                        for ((d, &gv), &y) in d.iter_mut().zip(&g).zip(vb) {
                            *d += gv * y;
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let d = slot(&mut adj, *b, g.len());
                        for ((d, &gv), &x) in d.iter_mut().zip(&g).zip(va) {
                            *d += gv * x;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    for (d, &v) in slot(&mut adj, *a, g.len()).iter_mut().zip(&g) {
                        *d += v * *c;
                    }
                }
                Op::Act(a, act) => {
                    let x = self.nodes[a.0].value.values();
                    let y = node.value.values();
                    let d = slot(&mut adj, *a, g.len());
                    for (((d, &gv), &xv), &yv) in d.iter_mut().zip(&g).zip(x).zip(y) {
                        *d += gv * act.derivative(xv, yv);
                    }
                }
                Op::Concat(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.cols();
                        if self.nodes[p.0].needs_grad {
                            let d = slot(&mut adj, *p, rows * pc);
                            for r in 0..rows {
                                let src = &g[r * total + offset..r * total + offset + pc];
                                add_into(&mut d[r * pc..(r + 1) * pc], src);
                            }
                        }
                        offset += pc;
                    }
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.numel();
                    let v = g[0] / S::of(n.max(1) as f64);
                    slot(&mut adj, *a, n).iter_mut().for_each(|d| *d += v);
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value.values(), self.nodes[b.0].value.values());
                    let scale = S::of(2.0) * g[0] / S::of(va.len().max(1) as f64);
                    let diff: Vec<S> = va.iter().zip(vb).map(|(&x, &y)| scale * (x - y)).collect();
                    if self.nodes[a.0].needs_grad {
                        add_into(slot(&mut adj, *a, diff.len()), &diff);
                    }
                    if self.nodes[b.0].needs_grad {
                        for (d, &v) in slot(&mut adj, *b, diff.len()).iter_mut().zip(&diff) {
                            *d -= v;
                        }
                    }
                }
                Op::WeightedSq(a, b, w) => {
                    let ta = &self.nodes[a.0].value;
                    let (va, vb) = (ta.values(), self.nodes[b.0].value.values());
                    let scale = S::of(2.0) * g[0] / S::of(ta.rows().max(1) as f64);
                    let c = w.len().max(1);
                    let diff: Vec<S> = va
                        .iter()
                        .zip(vb)
                        .enumerate()
                        .map(|(j, (&x, &y))| scale * w[j % c] * (x - y))
                        .collect();
                    if self.nodes[a.0].needs_grad {
                        add_into(slot(&mut adj, *a, diff.len()), &diff);
                    }
                    if self.nodes[b.0].needs_grad {
                        for (d, &v) in slot(&mut adj, *b, diff.len()).iter_mut().zip(&diff) {
                            *d -= v;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot<S: Scalar>(adj: &mut [Option<Vec<S>>], id: NodeId, len: usize) -> &mut Vec<S> {
    adj[id.0].get_or_insert_with(|| vec![S::zero(); len])
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<S: Scalar> Tensor<S> {
    /// Copy of shape and values without the gradient buffer.
    pub fn clone_values(&self) -> Tensor<S> {
        Tensor::new(self.shape().to_vec(), self.values().to_vec()).expect("valid tensor")
    }
}
