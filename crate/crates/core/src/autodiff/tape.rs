//! Reverse-mode tape. Nodes are appended in evaluation order, so the node
//! vector is already a topological order and backward is a single reverse
//! sweep.

use std::cell::{Ref, RefCell};
use std::fmt;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unary {
    Neg,
    Exp,
    Log,
    Tanh,
    Relu,
    Softplus,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Binary {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
            Binary::Pow => "pow",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Unary(Unary, usize),
    Binary(Binary, usize, usize),
    AddScalar(usize),
    MulScalar(usize, T),
    PowScalar(usize, T),
    Sum(usize),
    Mean(usize),
    SumAxis { x: usize, axis: usize },
    LogSumExpAxis { x: usize, axis: usize },
    MatMul(usize, usize),
    Conv1d { x: usize, w: usize, stride: usize },
    AvgPool1d { x: usize, width: usize },
    /// Concatenation (`sizes[i]` = extent of part i along `axis`) or stacking
    /// (every size 1, parts lack the axis).
    Concat { parts: Vec<usize>, axis: usize, sizes: Vec<usize> },
    Slice { x: usize, axis: usize, start: usize },
    Reshape(usize),
    BroadcastTo(usize),
    GradGate { x: usize, gate: usize },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    /// Whether any differentiable leaf is upstream of this node.
    pub(crate) rg: bool,
}

/// Gradient-scaling slot, bound after the forward pass (see [`Tape::grad_gate`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateId(pub(crate) usize);

pub struct Tape<T: Scalar> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<Vec<(String, usize)>>,
    gates: RefCell<Vec<Option<Tensor<T>>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("params", &self.params.borrow().len())
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
            gates: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, rg: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, rg });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable input leaf.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar_var(&self, value: T) -> Var<'_, T> {
        self.var(Tensor::scalar(value))
    }

    /// Non-differentiable leaf; backward never reaches it.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&self, value: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(value))
    }

    /// Differentiable leaf recorded in the parameter registry under `name`.
    pub fn param(&self, name: &str, value: Tensor<T>) -> Var<'_, T> {
        let v = self.var(value);
        self.params.borrow_mut().push((name.to_string(), v.id));
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.borrow().iter().map(|(n, _)| n.clone()).collect()
    }

    /// Allocate a gradient-scaling slot. Until bound it scales by one.
    pub fn new_gate(&self) -> GateId {
        let mut g = self.gates.borrow_mut();
        g.push(None);
        GateId(g.len() - 1)
    }

    /// Bind the multiplier applied by every [`Var::grad_gate`] using `gate`.
    /// Forward values never depend on it, so it may be set after the forward pass.
    pub fn bind_gate(&self, gate: GateId, scale: Tensor<T>) {
        self.gates.borrow_mut()[gate.0] = Some(scale);
    }

    /// Reverse sweep from a scalar `root`. Gradients are recomputed from zero on
    /// every call; only leaf gradients are retained.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let gates = self.gates.borrow();
        let r = root.id;
        if nodes[r].value.numel() != 1 {
            return Err(Error::NonScalarRoot(nodes[r].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; r + 1];
        grads[r] = Some(Tensor::ones(nodes[r].value.shape()));
        for i in (0..=r).rev() {
            if !nodes[i].rg {
                continue;
            }
            if matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop_node(&nodes, &gates, i, g, &mut grads);
        }
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(n, id)| (n.clone(), *id))
            .collect();
        Ok(Gradients { grads, params })
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    /// Value of a one-element node.
    pub fn item(&self) -> T {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].rg
    }

    pub(crate) fn rg(&self) -> bool {
        self.requires_grad()
    }
}

#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(String, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root with respect to a leaf; `None` if no path exists.
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Like [`get`](Self::get) but zero-filled when disconnected.
    pub fn wrt(&self, v: Var<'_, T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape()))
    }

    /// Registered parameters and their gradients (`None` when disconnected).
    pub fn params(&self) -> impl Iterator<Item = (&str, Option<&Tensor<T>>)> {
        self.params
            .iter()
            .map(|(n, id)| (n.as_str(), self.grads.get(*id).and_then(|g| g.as_ref())))
    }
}

fn accumulate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) {
    if !nodes[id].rg {
        return;
    }
    debug_assert_eq!(g.shape(), nodes[id].value.shape());
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    a.zip_with(b, "backward", f).expect("shapes validated in forward")
}

fn zip3<T: Scalar>(g: &Tensor<T>, a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(g.shape(), a.shape());
    debug_assert_eq!(g.shape(), b.shape());
    let data = g
        .data()
        .iter()
        .zip(a.data())
        .zip(b.data())
        .map(|((&g, &a), &b)| f(g, a, b))
        .collect();
    Tensor::from_vec(g.shape(), data).unwrap()
}

/// Split a shape around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn backprop_node<T: Scalar>(
    nodes: &[Node<T>],
    gates: &[Option<Tensor<T>>],
    i: usize,
    g: Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) {
    let out = &nodes[i].value;
    let val = |id: usize| &nodes[id].value;
    match nodes[i].op {
        Op::Leaf => {}
        Op::Unary(u, x) => {
            if !nodes[x].rg {
                return;
            }
            let xv = val(x);
            let gx = match u {
                Unary::Neg => g.map(|v| -v),
                Unary::Exp => zip3(&g, out, out, |g, y, _| g * y),
                Unary::Log => zip3(&g, xv, xv, |g, x, _| g / x),
                Unary::Tanh => zip3(&g, out, out, |g, y, _| g * (T::one() - y * y)),
                Unary::Relu => zip3(&g, xv, xv, |g, x, _| if x > T::zero() { g } else { T::zero() }),
                Unary::Softplus => zip3(&g, xv, xv, |g, x, _| g * scalar::sigmoid(x)),
                Unary::Sigmoid => zip3(&g, out, out, |g, y, _| g * y * (T::one() - y)),
            };
            accumulate(nodes, grads, x, gx);
        }
        Op::Binary(b, x, y) => {
            let (xv, yv) = (val(x), val(y));
            if nodes[x].rg {
                let gx = match b {
                    Binary::Add | Binary::Sub => g.clone(),
                    Binary::Mul => zip(&g, yv, |g, y| g * y),
                    Binary::Div => zip(&g, yv, |g, y| g / y),
                    Binary::Pow => {
                        let t = zip(xv, yv, |x, y| y * x.powf(y - T::one()));
                        zip(&g, &t, |g, t| g * t)
                    }
                };
                accumulate(nodes, grads, x, gx.reduce_to(xv.shape()));
            }
            if nodes[y].rg {
                let gy = match b {
                    Binary::Add => g,
                    Binary::Sub => g.map(|v| -v),
                    Binary::Mul => zip(&g, xv, |g, x| g * x),
                    Binary::Div => {
                        let q = zip(&g, out, |g, o| g * o);
                        zip(&q, yv, |q, y| -q / y)
                    }
                    Binary::Pow => {
                        let lx = xv.map(|x| if x == T::zero() { T::zero() } else { x.ln() });
                        let t = zip(out, &lx, |o, l| if l == T::zero() { T::zero() } else { o * l });
                        zip(&g, &t, |g, t| g * t)
                    }
                };
                accumulate(nodes, grads, y, gy.reduce_to(yv.shape()));
            }
        }
        Op::AddScalar(x) => accumulate(nodes, grads, x, g),
        Op::MulScalar(x, c) => accumulate(nodes, grads, x, g.map(|v| v * c)),
        Op::PowScalar(x, c) => {
            let gx = zip3(&g, val(x), val(x), |g, x, _| g * c * x.powf(c - T::one()));
            accumulate(nodes, grads, x, gx);
        }
        Op::Sum(x) => {
            let gv = g.item();
            accumulate(nodes, grads, x, Tensor::full(val(x).shape(), gv));
        }
        Op::Mean(x) => {
            let n = T::from_usize(val(x).numel()).unwrap();
            let gv = g.item() / n;
            accumulate(nodes, grads, x, Tensor::full(val(x).shape(), gv));
        }
        Op::SumAxis { x, axis } => {
            let xs = val(x).shape();
            let (outer, ext, inner) = split_axis(xs, axis);
            let gd = g.data();
            let mut gx = Vec::with_capacity(outer * ext * inner);
            for o in 0..outer {
                for _ in 0..ext {
                    gx.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                }
            }
            accumulate(nodes, grads, x, Tensor::from_vec(xs, gx).unwrap());
        }
        Op::LogSumExpAxis { x, axis } => {
            let xv = val(x);
            let (outer, ext, inner) = split_axis(xv.shape(), axis);
            let (xd, od, gd) = (xv.data(), out.data(), g.data());
            let mut gx = vec![T::zero(); xv.numel()];
            for o in 0..outer {
                for e in 0..ext {
                    for j in 0..inner {
                        let k = (o * ext + e) * inner + j;
                        let r = o * inner + j;
                        gx[k] = gd[r] * (xd[k] - od[r]).exp();
                    }
                }
            }
            accumulate(nodes, grads, x, Tensor::from_vec(xv.shape(), gx).unwrap());
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            if nodes[a].rg {
                let ga = g.matmul(&bv.transpose().unwrap()).unwrap();
                accumulate(nodes, grads, a, ga);
            }
            if nodes[b].rg {
                let gb = av.transpose().unwrap().matmul(&g).unwrap();
                accumulate(nodes, grads, b, gb);
            }
        }
        Op::Conv1d { x, w, stride } => {
            let (xv, wv) = (val(x), val(w));
            let (n, cin, len) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
            let (cout, width) = (wv.shape()[0], wv.shape()[2]);
            let lo = out.shape()[2];
            let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
            let mut gx = vec![T::zero(); xv.numel()];
            let mut gw = vec![T::zero(); wv.numel()];
            for b in 0..n {
                for o in 0..cout {
                    for t in 0..lo {
                        let go = gd[(b * cout + o) * lo + t];
                        for c in 0..cin {
                            for k in 0..width {
                                let xi = (b * cin + c) * len + t * stride + k;
                                let wi = (o * cin + c) * width + k;
                                gx[xi] = gx[xi] + go * wd[wi];
                                gw[wi] = gw[wi] + go * xd[xi];
                            }
                        }
                    }
                }
            }
            accumulate(nodes, grads, x, Tensor::from_vec(xv.shape(), gx).unwrap());
            accumulate(nodes, grads, w, Tensor::from_vec(wv.shape(), gw).unwrap());
        }
        Op::AvgPool1d { x, width } => {
            let xv = val(x);
            let (rows, len) = (xv.shape()[0] * xv.shape()[1], xv.shape()[2]);
            let lo = out.shape()[2];
            let inv = T::one() / T::from_usize(width).unwrap();
            let gd = g.data();
            let mut gx = vec![T::zero(); xv.numel()];
            for r in 0..rows {
                for t in 0..lo {
                    let gv = gd[r * lo + t] * inv;
                    for k in 0..width {
                        gx[r * len + t * width + k] = gv;
                    }
                }
            }
            accumulate(nodes, grads, x, Tensor::from_vec(xv.shape(), gx).unwrap());
        }
        Op::Concat {
            ref parts,
            axis,
            ref sizes,
        } => {
            let (outer, total, inner) = split_axis(out.shape(), axis);
            let gd = g.data();
            let mut offset = 0;
            for (&p, &sz) in parts.iter().zip(sizes) {
                if nodes[p].rg {
                    let mut gp = Vec::with_capacity(outer * sz * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        gp.extend_from_slice(&gd[start..start + sz * inner]);
                    }
                    accumulate(nodes, grads, p, Tensor::from_vec(val(p).shape(), gp).unwrap());
                }
                offset += sz;
            }
        }
        Op::Slice { x, axis, start } => {
            let xv = val(x);
            let (outer, ext, inner) = split_axis(xv.shape(), axis);
            let len = out.shape()[axis];
            let gd = g.data();
            let mut gx = vec![T::zero(); xv.numel()];
            for o in 0..outer {
                let dst = (o * ext + start) * inner;
                gx[dst..dst + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
            }
            accumulate(nodes, grads, x, Tensor::from_vec(xv.shape(), gx).unwrap());
        }
        Op::Reshape(x) => {
            let gx = Tensor::from_vec(val(x).shape(), g.into_data()).unwrap();
            accumulate(nodes, grads, x, gx);
        }
        Op::BroadcastTo(x) => {
            let gx = g.reduce_to(val(x).shape());
            accumulate(nodes, grads, x, gx);
        }
        Op::GradGate { x, gate } => {
            let gx = match &gates[gate] {
                Some(s) => zip(&g, s, |g, s| g * s).reduce_to(val(x).shape()),
                None => g,
            };
            accumulate(nodes, grads, x, gx);
        }
    }
}
