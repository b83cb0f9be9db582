//! Dense row-major arrays with numpy-style broadcasting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                shapes: format!("{shape:?} needs {n} elements, got {}", data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// Rank-0 tensor.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Rank-1 tensor.
    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn get(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {index:?} out of bounds for {:?} (axis {i})", self.shape);
            off = off * d + ix;
        }
        self.data[off]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other` for identical shapes.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Binary elementwise map with broadcasting.
    pub fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Self {
                shape: self.shape.clone(),
                data,
            });
        }
        let out_shape = broadcast_shape(&self.shape, &other.shape)
            .ok_or_else(|| Error::shape(op, &[&self.shape, &other.shape]))?;
        if other.numel() == 1 && out_shape == self.shape {
            let b = other.data[0];
            return Ok(Self {
                shape: out_shape,
                data: self.data.iter().map(|&a| f(a, b)).collect(),
            });
        }
        if self.numel() == 1 && out_shape == other.shape {
            let a = self.data[0];
            return Ok(Self {
                shape: out_shape,
                data: other.data.iter().map(|&b| f(a, b)).collect(),
            });
        }
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for_each_offset2(&out_shape, &sa, &sb, |ia, ib| data.push(f(self.data[ia], other.data[ib])));
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Sum `self` down to `target`, inverting a broadcast from `target` to `self.shape`.
    pub fn reduce_to(self, target: &[usize]) -> Self {
        if self.shape == target {
            return self;
        }
        let n: usize = target.iter().product();
        if n == 1 {
            let s = self.sum();
            return Self {
                shape: target.to_vec(),
                data: vec![s],
            };
        }
        if n == self.numel() {
            // only leading/size-1 axes differ
            return Self {
                shape: target.to_vec(),
                data: self.data,
            };
        }
        let st = broadcast_strides(target, &self.shape);
        let mut out = vec![T::zero(); n];
        let mut src = self.data.iter();
        for_each_offset1(&self.shape, &st, |it| {
            out[it] = out[it] + *src.next().unwrap();
        });
        Self {
            shape: target.to_vec(),
            data: out,
        }
    }

    /// Materialise a broadcast of `self` to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        match broadcast_shape(&self.shape, shape) {
            Some(s) if s == shape => {}
            _ => return Err(Error::shape("broadcast_to", &[&self.shape, shape])),
        }
        if self.shape == shape {
            return Ok(self.clone());
        }
        let st = broadcast_strides(&self.shape, shape);
        let mut data = Vec::with_capacity(shape.iter().product());
        for_each_offset1(shape, &st, |i| data.push(self.data[i]));
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape("matmul", &[&self.shape, &other.shape]));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", &[&self.shape]));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = Vec::with_capacity(m * n);
        for j in 0..n {
            for i in 0..m {
                data.push(self.data[i * n + j]);
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data,
        })
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![0; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        s[i] = acc;
        acc *= shape[i];
    }
    s
}

/// Strides for reading `src` as if broadcast to `out` (0 on broadcast axes).
pub(crate) fn broadcast_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let cs = contiguous_strides(src);
    let off = out.len() - src.len();
    (0..out.len())
        .map(|i| {
            if i < off || src[i - off] == 1 {
                0
            } else {
                cs[i - off]
            }
        })
        .collect()
}

fn for_each_offset1(shape: &[usize], s: &[usize], mut f: impl FnMut(usize)) {
    let r = shape.len();
    if shape.iter().any(|&d| d == 0) {
        return;
    }
    if r == 0 {
        f(0);
        return;
    }
    let inner = shape[r - 1];
    let si = s[r - 1];
    let mut idx = vec![0usize; r - 1];
    let mut base = 0usize;
    loop {
        let mut o = base;
        for _ in 0..inner {
            f(o);
            o += si;
        }
        let mut ax = r - 1;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            base += s[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            base -= s[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

fn for_each_offset2(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    let r = shape.len();
    if shape.iter().any(|&d| d == 0) {
        return;
    }
    if r == 0 {
        f(0, 0);
        return;
    }
    let inner = shape[r - 1];
    let (ia_s, ib_s) = (sa[r - 1], sb[r - 1]);
    let mut idx = vec![0usize; r - 1];
    let (mut ba, mut bb) = (0usize, 0usize);
    loop {
        let (mut oa, mut ob) = (ba, bb);
        for _ in 0..inner {
            f(oa, ob);
            oa += ia_s;
            ob += ib_s;
        }
        let mut ax = r - 1;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            ba += sa[ax];
            bb += sb[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            ba -= sa[ax] * shape[ax];
            bb -= sb[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}
