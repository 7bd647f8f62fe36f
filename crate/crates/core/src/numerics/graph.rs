//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node whose inputs were recorded earlier, so
//! the node vector is already in topological order and `backward` is a single
//! reverse sweep. Parameters are read in place from a borrowed [`ParamStore`].

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    ScaleBy(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Softmax(NodeId),
    LogSumExp(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Dot(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    // `None` for parameters, which live in the store.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Computation tape for one forward/backward pass.
#[derive(Debug)]
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
    grad_enabled: bool,
    checked: bool,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow; clamped so it stays positive where e^x underflows
    (x.max(0.0) + (-x.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<'p> Graph<'p> {
    /// A tape that records gradients.
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            grad_enabled: true,
            checked: false,
        }
    }

    /// A forward-only tape; `backward` on it returns zero gradients.
    pub fn inference(params: &'p ParamStore) -> Self {
        Self {
            grad_enabled: false,
            ..Self::new(params)
        }
    }

    /// In checked mode every primitive rejects non-finite outputs.
    pub fn with_checks(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            (None, _) => unreachable!("only parameter nodes omit their value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, kind: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("primitive `{op}`"),
            });
        }
        let requires_grad = self.grad_enabled && inputs.iter().any(|&i| self.requires(i));
        self.nodes.push(Node {
            value: Some(value),
            op: kind,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Records a constant tensor.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        self.push("input", value, Op::Input, &[])
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Result<NodeId> {
        if values.is_empty() {
            return Err(Error::Empty("vector input"));
        }
        self.input(Tensor::vector(values))
    }

    /// The node reading parameter `id`; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: self.grad_enabled,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(node);
        node
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.same_shape(ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    /// Matrix product: `[r, c] x [c] -> [r]` or `[r, c] x [c, n] -> [r, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sb[0] != sa[1] {
            return Err(mismatch());
        }
        let (rows, inner) = (sa[0], sa[1]);
        let cols = if sb.len() == 2 { sb[1] } else { 1 };
        let (ma, mb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &ma[r * inner..(r + 1) * inner];
            for (k, &w) in row.iter().enumerate() {
                let brow = &mb[k * cols..(k + 1) * cols];
                for (o, &x) in out[r * cols..(r + 1) * cols].iter_mut().zip(brow) {
                    *o += w * x;
                }
            }
        }
        let shape = if sb.len() == 2 { vec![rows, cols] } else { vec![rows] };
        let value = Tensor::new(shape, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("div", a, b)?;
        let v = self.zip_with(a, b, |x, y| x / y);
        self.push("div", v, Op::Div(a, b), &[a, b])
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * factor);
        self.push("scale", v, Op::Scale(a, factor), &[a])
    }

    /// Adds a constant to every entry.
    pub fn add_scalar(&mut self, a: NodeId, offset: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + offset);
        self.push("add_scalar", v, Op::AddScalar(a), &[a])
    }

    /// `1 - a`, used by gated recurrences.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    /// Multiplies tensor `v` by the scalar node `s`.
    pub fn scale_by(&mut self, s: NodeId, v: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "scale_by",
                left: self.shape(s).to_vec(),
                right: self.shape(v).to_vec(),
            });
        }
        let k = self.value(s).item();
        let out = self.value(v).map(|x| x * k);
        self.push("scale_by", out, Op::ScaleBy(s, v), &[s, v])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push("tanh", v, Op::Tanh(a), &[a])
    }

    /// `log(1 + exp(a))`.
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(softplus);
        self.push("softplus", v, Op::Softplus(a), &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::exp);
        self.push("exp", v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::ln);
        self.push("log", v, Op::Log(a), &[a])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * x);
        self.push("square", v, Op::Square(a), &[a])
    }

    /// Softmax over all entries, with max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let v = t.same_shape(softmax(t.data()));
        self.push("softmax", v, Op::Softmax(a), &[a])
    }

    /// `log(sum(exp(a)))` as a scalar, with max subtraction.
    pub fn log_sum_exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(log_sum_exp(self.value(a).data()));
        self.push("log_sum_exp", v, Op::LogSumExp(a), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push("sum", v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push("mean", v, Op::Mean(a), &[a])
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("dot", a, b)?;
        let v = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        self.push("dot", Tensor::scalar(v), Op::Dot(a, b), &[a, b])
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Empty("concat operands"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(Error::InvalidOperand {
                    op: "concat",
                    message: format!("operands must be scalars or vectors, got shape {:?}", t.shape()),
                });
            }
            data.extend_from_slice(t.data());
        }
        self.push("concat", Tensor::vector(data), Op::Concat(parts.to_vec()), parts)
    }

    /// Entries `start..start + len` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.rank() > 1 || len == 0 || start + len > t.len() {
            return Err(Error::InvalidOperand {
                op: "slice",
                message: format!("range {start}..{} invalid for shape {:?}", start + len, t.shape()),
            });
        }
        let v = Tensor::vector(t.data()[start..start + len].to_vec());
        self.push("slice", v, Op::Slice(a, start), &[a])
    }

    /// Gradient of the scalar `root` with respect to every parameter in the
    /// store. Parameters the root does not depend on get zero tensors.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut out = self.params.zeros_like();
        if !self.requires(root) {
            return Ok(out);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.as_ref();
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out.0[p.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (rows, inner) = (ta.shape()[0], ta.shape()[1]);
                    let cols = tb.len() / inner;
                    let gd = g.data();
                    if self.requires(*a) {
                        // dA = dY * B^T
                        let mut da = vec![0.0; rows * inner];
                        for r in 0..rows {
                            for k in 0..inner {
                                let brow = &tb.data()[k * cols..(k + 1) * cols];
                                da[r * inner + k] = gd[r * cols..(r + 1) * cols]
                                    .iter()
                                    .zip(brow)
                                    .map(|(x, y)| x * y)
                                    .sum();
                            }
                        }
                        accumulate(&mut grads, *a, ta.same_shape(da));
                    }
                    if self.requires(*b) {
                        // dB = A^T * dY
                        let mut db = vec![0.0; inner * cols];
                        for r in 0..rows {
                            let grow = &gd[r * cols..(r + 1) * cols];
                            for k in 0..inner {
                                let w = ta.data()[r * inner + k];
                                for (o, &x) in db[k * cols..(k + 1) * cols].iter_mut().zip(grow) {
                                    *o += w * x;
                                }
                            }
                        }
                        accumulate(&mut grads, *b, tb.same_shape(db));
                    }
                }
                Op::Add(a, b) => {
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires(*a) {
                        let d = self.elementwise(&g, *b, |g, y| g * y);
                        accumulate(&mut grads, *a, d);
                    }
                    if self.requires(*b) {
                        let d = self.elementwise(&g, *a, |g, x| g * x);
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::Div(a, b) => {
                    let tb = self.value(*b);
                    if self.requires(*a) {
                        let d = self.elementwise(&g, *b, |g, y| g / y);
                        accumulate(&mut grads, *a, d);
                    }
                    if self.requires(*b) {
                        let ta = self.value(*a);
                        let d: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(ta.data())
                            .zip(tb.data())
                            .map(|((g, x), y)| -g * x / (y * y))
                            .collect();
                        accumulate(&mut grads, *b, tb.same_shape(d));
                    }
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|x| x * k)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::ScaleBy(s, v) => {
                    let k = self.value(*s).item();
                    if self.requires(*s) {
                        let d: f64 = g.data().iter().zip(self.value(*v).data()).map(|(g, x)| g * x).sum();
                        accumulate(&mut grads, *s, self.value(*s).same_shape(vec![d]));
                    }
                    if self.requires(*v) {
                        accumulate(&mut grads, *v, g.map(|x| x * k));
                    }
                }
                Op::Sigmoid(a) => {
                    let d = zip_out(&g, y, |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = zip_out(&g, y, |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *a, d);
                }
                Op::Softplus(a) => {
                    let d = self.elementwise(&g, *a, |g, x| g * sigmoid(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let d = zip_out(&g, y, |g, e| g * e);
                    accumulate(&mut grads, *a, d);
                }
                Op::Log(a) => {
                    let d = self.elementwise(&g, *a, |g, x| g / x);
                    accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let d = self.elementwise(&g, *a, |g, x| 2.0 * g * x);
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let s = y.expect("softmax output recorded");
                    let inner: f64 = g.data().iter().zip(s.data()).map(|(g, s)| g * s).sum();
                    let d = zip_out(&g, Some(s), |g, s| s * (g - inner));
                    accumulate(&mut grads, *a, d);
                }
                Op::LogSumExp(a) => {
                    let lse = g_item(y);
                    let gs = g.item();
                    let d = self.value(*a).map(|x| gs * (x - lse).exp());
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), gs));
                }
                Op::Mean(a) => {
                    let t = self.value(*a);
                    let gs = g.item() / t.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(t.shape(), gs));
                }
                Op::Dot(a, b) => {
                    let gs = g.item();
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, self.value(*b).map(|x| gs * x));
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, self.value(*a).map(|x| gs * x));
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let t = self.value(*p);
                        let n = t.len();
                        if self.requires(*p) {
                            let d = t.same_shape(g.data()[offset..offset + n].to_vec());
                            accumulate(&mut grads, *p, d);
                        }
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let t = self.value(*a);
                    let mut d = vec![0.0; t.len()];
                    d[*start..*start + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, t.same_shape(d));
                }
            }
        }
        Ok(out)
    }

    fn elementwise(&self, g: &Tensor, other: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let o = self.value(other);
        o.same_shape(g.data().iter().zip(o.data()).map(|(&g, &x)| f(g, x)).collect())
    }
}

fn g_item(y: Option<&Tensor>) -> f64 {
    y.expect("reduction output recorded").item()
}

fn zip_out(g: &Tensor, y: Option<&Tensor>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let y = y.expect("output recorded");
    y.same_shape(g.data().iter().zip(y.data()).map(|(&g, &y)| f(g, y)).collect())
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
