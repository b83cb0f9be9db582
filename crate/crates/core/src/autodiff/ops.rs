//! Forward primitives. Arithmetic operators panic on shape mismatch; the
//! `try_*` forms return the error instead.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{split_axis, Binary, GateId, Op, Unary, Var};
use super::tensor::{broadcast_shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

impl<'t, T: Scalar> Var<'t, T> {
    fn unary(self, u: Unary, f: impl Fn(T) -> T) -> Self {
        let v = self.value().map(f);
        self.tape.push(v, Op::Unary(u, self.id), self.rg())
    }

    fn binary(self, other: Self, b: Binary, f: impl Fn(T, T) -> T) -> Result<Self> {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        let v = {
            let (x, y) = (self.value(), other.value());
            x.zip_with(&y, b.name(), f)?
        };
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(v, Op::Binary(b, self.id, other.id), rg))
    }

    pub fn try_add(self, other: Self) -> Result<Self> {
        self.binary(other, Binary::Add, |a, b| a + b)
    }

    pub fn try_sub(self, other: Self) -> Result<Self> {
        self.binary(other, Binary::Sub, |a, b| a - b)
    }

    pub fn try_mul(self, other: Self) -> Result<Self> {
        self.binary(other, Binary::Mul, |a, b| a * b)
    }

    pub fn try_div(self, other: Self) -> Result<Self> {
        self.binary(other, Binary::Div, |a, b| a / b)
    }

    /// Elementwise `self^exponent` with both operands differentiable.
    pub fn try_pow(self, exponent: Self) -> Result<Self> {
        self.binary(exponent, Binary::Pow, |a, b| a.powf(b))
    }

    pub fn pow(self, exponent: Self) -> Self {
        self.try_pow(exponent).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn powf(self, c: T) -> Self {
        let v = self.value().map(|x| x.powf(c));
        self.tape.push(v, Op::PowScalar(self.id, c), self.rg())
    }

    pub fn add_scalar(self, c: T) -> Self {
        let v = self.value().map(|x| x + c);
        self.tape.push(v, Op::AddScalar(self.id), self.rg())
    }

    pub fn mul_scalar(self, c: T) -> Self {
        let v = self.value().map(|x| x * c);
        self.tape.push(v, Op::MulScalar(self.id, c), self.rg())
    }

    /// `c - self`.
    pub fn rsub_scalar(self, c: T) -> Self {
        self.neg().add_scalar(c)
    }

    pub fn exp(self) -> Self {
        self.unary(Unary::Exp, T::exp)
    }

    pub fn ln(self) -> Self {
        self.unary(Unary::Log, T::ln)
    }

    pub fn tanh(self) -> Self {
        self.unary(Unary::Tanh, T::tanh)
    }

    pub fn relu(self) -> Self {
        self.unary(Unary::Relu, |x| x.max(T::zero()))
    }

    pub fn softplus(self) -> Self {
        self.unary(Unary::Softplus, scalar::softplus)
    }

    pub fn sigmoid(self) -> Self {
        self.unary(Unary::Sigmoid, scalar::sigmoid)
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// `max(self, floor)` written as `floor + relu(self - floor)`.
    pub fn floor_at(self, floor: T) -> Self {
        self.add_scalar(-floor).relu().add_scalar(floor)
    }

    /// Sum of all elements (rank-0 result).
    pub fn sum(self) -> Self {
        let v = Tensor::scalar(self.value().sum());
        self.tape.push(v, Op::Sum(self.id), self.rg())
    }

    pub fn mean(self) -> Self {
        let v = {
            let x = self.value();
            Tensor::scalar(x.sum() / T::from_usize(x.numel()).unwrap())
        };
        self.tape.push(v, Op::Mean(self.id), self.rg())
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Self> {
        let v = {
            let x = self.value();
            check_axis("sum_axis", x.shape(), axis)?;
            let (outer, ext, inner) = split_axis(x.shape(), axis);
            let mut out = vec![T::zero(); outer * inner];
            let d = x.data();
            for o in 0..outer {
                for e in 0..ext {
                    let src = &d[(o * ext + e) * inner..(o * ext + e + 1) * inner];
                    for (acc, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *acc = *acc + s;
                    }
                }
            }
            Tensor::from_vec(&remove_axis(x.shape(), axis), out)?
        };
        Ok(self.tape.push(v, Op::SumAxis { x: self.id, axis }, self.rg()))
    }

    /// Max-shifted log-sum-exp over `axis`, removing it.
    pub fn logsumexp_axis(self, axis: usize) -> Result<Self> {
        let v = {
            let x = self.value();
            check_axis("logsumexp", x.shape(), axis)?;
            let (outer, ext, inner) = split_axis(x.shape(), axis);
            let d = x.data();
            let mut out = Vec::with_capacity(outer * inner);
            let mut buf = vec![T::zero(); ext];
            for o in 0..outer {
                for j in 0..inner {
                    for (e, b) in buf.iter_mut().enumerate() {
                        *b = d[(o * ext + e) * inner + j];
                    }
                    out.push(scalar::logsumexp(&buf));
                }
            }
            Tensor::from_vec(&remove_axis(x.shape(), axis), out)?
        };
        Ok(self.tape.push(v, Op::LogSumExpAxis { x: self.id, axis }, self.rg()))
    }

    /// Log-sum-exp over every element (rank-0 result).
    pub fn logsumexp(self) -> Self {
        let n = self.numel();
        self.reshape(&[n]).and_then(|v| v.logsumexp_axis(0)).expect("flat logsumexp")
    }

    /// `[m,k] x [k,n]`.
    pub fn matmul(self, other: Self) -> Result<Self> {
        let v = self.value().matmul(&other.value())?;
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(v, Op::MatMul(self.id, other.id), rg))
    }

    /// Valid (unpadded) strided convolution over the last axis:
    /// input `[batch, c_in, len]`, filters `[c_out, c_in, width]`.
    pub fn conv1d(self, filters: Self, stride: usize) -> Result<Self> {
        let v = {
            let (x, w) = (self.value(), filters.value());
            let (xs, ws) = (x.shape(), w.shape());
            if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
                return Err(Error::shape("conv1d", &[xs, ws]));
            }
            let (n, cin, len) = (xs[0], xs[1], xs[2]);
            let (cout, width) = (ws[0], ws[2]);
            if len < width {
                return Err(Error::Shape {
                    op: "conv1d",
                    shapes: format!("input length {len} shorter than filter width {width}"),
                });
            }
            let lo = (len - width) / stride + 1;
            let (xd, wd) = (x.data(), w.data());
            let mut out = vec![T::zero(); n * cout * lo];
            for b in 0..n {
                for o in 0..cout {
                    for t in 0..lo {
                        let mut acc = T::zero();
                        for c in 0..cin {
                            let xrow = &xd[(b * cin + c) * len + t * stride..];
                            let wrow = &wd[(o * cin + c) * width..(o * cin + c + 1) * width];
                            for (k, &wv) in wrow.iter().enumerate() {
                                acc = acc + wv * xrow[k];
                            }
                        }
                        out[(b * cout + o) * lo + t] = acc;
                    }
                }
            }
            Tensor::from_vec(&[n, cout, lo], out)?
        };
        let rg = self.rg() || filters.rg();
        Ok(self.tape.push(
            v,
            Op::Conv1d {
                x: self.id,
                w: filters.id,
                stride,
            },
            rg,
        ))
    }

    /// Non-overlapping average pooling over the last axis of `[batch, c, len]`.
    pub fn avg_pool1d(self, width: usize) -> Result<Self> {
        let v = {
            let x = self.value();
            let xs = x.shape();
            if xs.len() != 3 || width == 0 || xs[2] < width {
                return Err(Error::Shape {
                    op: "avg_pool1d",
                    shapes: format!("{xs:?} with width {width}"),
                });
            }
            let (rows, len) = (xs[0] * xs[1], xs[2]);
            let lo = len / width;
            let inv = T::one() / T::from_usize(width).unwrap();
            let d = x.data();
            let mut out = Vec::with_capacity(rows * lo);
            for r in 0..rows {
                for t in 0..lo {
                    let s: T = d[r * len + t * width..r * len + (t + 1) * width].iter().copied().sum();
                    out.push(s * inv);
                }
            }
            Tensor::from_vec(&[xs[0], xs[1], lo], out)?
        };
        Ok(self.tape.push(v, Op::AvgPool1d { x: self.id, width }, self.rg()))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let v = {
            let x = self.value();
            if x.numel() != shape.iter().product::<usize>() {
                return Err(Error::shape("reshape", &[x.shape(), shape]));
            }
            x.reshape(shape)?
        };
        Ok(self.tape.push(v, Op::Reshape(self.id), self.rg()))
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Self> {
        let v = self.value().broadcast_to(shape)?;
        Ok(self.tape.push(v, Op::BroadcastTo(self.id), self.rg()))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let v = {
            let x = self.value();
            check_axis("slice", x.shape(), axis)?;
            if start + len > x.shape()[axis] {
                return Err(Error::Shape {
                    op: "slice",
                    shapes: format!("{:?} axis {axis} range {start}..{}", x.shape(), start + len),
                });
            }
            let (outer, ext, inner) = split_axis(x.shape(), axis);
            let d = x.data();
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let s = (o * ext + start) * inner;
                out.extend_from_slice(&d[s..s + len * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[axis] = len;
            Tensor::from_vec(&shape, out)?
        };
        Ok(self.tape.push(
            v,
            Op::Slice {
                x: self.id,
                axis,
                start,
            },
            self.rg(),
        ))
    }

    /// Treat as a constant during backward; the value passes through.
    pub fn stop_gradient(self) -> Self {
        let v = self.value().clone();
        self.tape.push(v, Op::Leaf, false)
    }

    /// Identity in the forward pass; backward multiplies the incoming gradient
    /// by the tensor bound to `gate` (broadcast to this node's shape).
    pub fn grad_gate(self, gate: GateId) -> Self {
        let v = self.value().clone();
        self.tape.push(
            v,
            Op::GradGate {
                x: self.id,
                gate: gate.0,
            },
            self.rg(),
        )
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::Shape {
            op,
            shapes: format!("{shape:?} has no axis {axis}"),
        });
    }
    Ok(())
}

fn remove_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

/// Concatenate along an existing axis.
pub fn concat<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    join(parts, axis, false)
}

/// Stack along a new axis inserted at `axis`.
pub fn stack<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    join(parts, axis, true)
}

fn join<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize, new_axis: bool) -> Result<Var<'t, T>> {
    let op = if new_axis { "stack" } else { "concat" };
    let first = parts.first().ok_or(Error::Shape {
        op,
        shapes: "no inputs".into(),
    })?;
    let tape = first.tape;
    let nodes = tape.nodes.borrow();
    let shapes: Vec<&[usize]> = parts.iter().map(|p| nodes[p.id].value.shape()).collect();
    let base = shapes[0];
    let rank_ok = if new_axis { axis <= base.len() } else { axis < base.len() };
    if !rank_ok {
        return Err(Error::shape(op, &shapes));
    }
    let mut sizes = Vec::with_capacity(parts.len());
    for s in &shapes {
        let same = s.len() == base.len()
            && s.iter()
                .zip(base)
                .enumerate()
                .all(|(i, (a, b))| a == b || (!new_axis && i == axis));
        if !same {
            return Err(Error::shape(op, &shapes));
        }
        sizes.push(if new_axis { 1 } else { s[axis] });
    }
    let total: usize = sizes.iter().sum();
    let mut out_shape = base.to_vec();
    if new_axis {
        out_shape.insert(axis, total);
    } else {
        out_shape[axis] = total;
    }
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (p, &sz) in parts.iter().zip(&sizes) {
            let d = nodes[p.id].value.data();
            data.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
        }
    }
    let rg = parts.iter().any(|p| nodes[p.id].rg);
    drop(nodes);
    let v = Tensor::from_vec(&out_shape, data)?;
    Ok(tape.push(
        v,
        Op::Concat {
            parts: parts.iter().map(|p| p.id).collect(),
            axis,
            sizes,
        },
        rg,
    ))
}

/// Shape that `a op b` would have, or the primitive's shape error.
pub fn broadcast_result(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    broadcast_shape(a, b).ok_or_else(|| Error::shape(op, &[a, b]))
}

macro_rules! var_binop {
    ($tr:ident, $m:ident, $try:ident) => {
        impl<'t, T: Scalar> $tr for Var<'t, T> {
            type Output = Var<'t, T>;
            fn $m(self, rhs: Self) -> Self::Output {
                self.$try(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

var_binop!(Add, add, try_add);
var_binop!(Sub, sub, try_sub);
var_binop!(Mul, mul, try_mul);
var_binop!(Div, div, try_div);

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Self::Output {
        self.unary(Unary::Neg, |x| -x)
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, c: T) -> Self::Output {
        self.add_scalar(c)
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, c: T) -> Self::Output {
        self.add_scalar(-c)
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, c: T) -> Self::Output {
        self.mul_scalar(c)
    }
}

impl<'t, T: Scalar> Div<T> for Var<'t, T> {
    type Output = Var<'t, T>;
    fn div(self, c: T) -> Self::Output {
        self.mul_scalar(T::one() / c)
    }
}
