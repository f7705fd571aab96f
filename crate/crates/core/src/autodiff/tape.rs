//! Reverse-mode tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep visits
//! every node after all of its consumers. Operations are coarse (matrix
//! products, elementwise maps, reductions) plus "local" nodes: scalar outputs
//! whose Jacobian with respect to each parent was computed during the forward
//! pass. The fused Gaussian kernels in [`super::kernels`] use the latter.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{usage, Result, SgmError};
use crate::scalar::Scalar;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    /// `a + b` with `b` a single row broadcast over `a`'s rows.
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    Shift(usize),
    /// Per-column affine map `x * scale[c] + shift[c]`.
    AffineCols(usize, Vec<T>),
    Tanh(usize),
    Exp(usize),
    Softplus(usize),
    Square(usize),
    Sqrt(usize),
    Ln(usize),
    Gather(usize, Vec<usize>),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    Sum(usize),
    Mean(usize),
    Local(Vec<(usize, Tensor<T>)>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output with respect to every node that needs one.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    #[inline]
    fn ix(&self, v: Var) -> usize {
        assert!(v.tape == self.id && v.idx < self.nodes.len(), "variable used with a foreign tape");
        v.idx
    }

    #[inline]
    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Differentiable input.
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.ix(v)].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ia, ib) = (self.ix(a), self.ix(b));
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value);
        let ng = self.ng(ia) || self.ng(ib);
        self.push(v, Op::MatMul(ia, ib), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ia, ib) = (self.ix(a), self.ix(row));
        let (av, bv) = (&self.nodes[ia].value, &self.nodes[ib].value);
        assert_eq!(bv.rows(), 1, "add_row expects a single-row bias");
        assert_eq!(av.cols(), bv.cols(), "add_row column mismatch");
        let cols = av.cols();
        let mut out = av.clone();
        for (k, o) in out.data_mut().iter_mut().enumerate() {
            *o = *o + bv.data()[k % cols];
        }
        let ng = self.ng(ia) || self.ng(ib);
        self.push(out, Op::AddRow(ia, ib), ng)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: fn(usize, usize) -> Op<T>) -> Var {
        let (ia, ib) = (self.ix(a), self.ix(b));
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, f);
        let ng = self.ng(ia) || self.ng(ib);
        self.push(v, op(ia, ib), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let ia = self.ix(a);
        let v = self.nodes[ia].value.map(f);
        let ng = self.ng(ia);
        self.push(v, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let ia = self.ix(a);
        self.unary(a, |x| x * s, Op::Scale(ia, s))
    }

    pub fn shift(&mut self, a: Var, s: T) -> Var {
        let ia = self.ix(a);
        self.unary(a, |x| x + s, Op::Shift(ia))
    }

    pub fn affine_cols(&mut self, a: Var, scale: &[T], shift: &[T]) -> Var {
        let ia = self.ix(a);
        let av = &self.nodes[ia].value;
        assert!(scale.len() == av.cols() && shift.len() == av.cols(), "affine_cols width mismatch");
        let cols = av.cols();
        let mut out = av.clone();
        for (k, o) in out.data_mut().iter_mut().enumerate() {
            *o = *o * scale[k % cols] + shift[k % cols];
        }
        let ng = self.ng(ia);
        self.push(out, Op::AffineCols(ia, scale.to_vec()), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, T::tanh, Op::Tanh(ia))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, T::exp, Op::Exp(ia))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, softplus, Op::Softplus(ia))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, |x| x * x, Op::Square(ia))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, T::sqrt, Op::Sqrt(ia))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        self.unary(a, T::ln, Op::Ln(ia))
    }

    /// Row selection; equivalent to multiplying by a stack of one-hot rows.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let ia = self.ix(a);
        let av = &self.nodes[ia].value;
        let cols = av.cols();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &r in idx {
            out.extend_from_slice(av.row(r));
        }
        let ng = self.ng(ia);
        self.push(Tensor::new(idx.len(), cols, out), Op::Gather(ia, idx.to_vec()), ng)
    }

    /// Column-wise concatenation of equally tall tensors.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let ids: Vec<usize> = parts.iter().map(|&p| self.ix(p)).collect();
        let rows = self.nodes[ids[0]].value.rows();
        assert!(ids.iter().all(|&i| self.nodes[i].value.rows() == rows), "concat_cols row mismatch");
        let cols: usize = ids.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &ids {
                out.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let ng = ids.iter().any(|&i| self.ng(i));
        self.push(Tensor::new(rows, cols, out), Op::Concat(ids), ng)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let ia = self.ix(a);
        let av = &self.nodes[ia].value;
        assert!(start < end && end <= av.cols(), "slice_cols out of range");
        let mut out = Vec::with_capacity(av.rows() * (end - start));
        for r in 0..av.rows() {
            out.extend_from_slice(&av.row(r)[start..end]);
        }
        let v = Tensor::new(av.rows(), end - start, out);
        let ng = self.ng(ia);
        self.push(v, Op::SliceCols(ia, start), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        let v = Tensor::scalar(self.nodes[ia].value.sum());
        let ng = self.ng(ia);
        self.push(v, Op::Sum(ia), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.ix(a);
        let t = &self.nodes[ia].value;
        let v = Tensor::scalar(t.sum() / T::from_usize_lossy(t.data().len()));
        let ng = self.ng(ia);
        self.push(v, Op::Mean(ia), ng)
    }

    /// Scalar node whose derivative with respect to each parent is supplied by
    /// the caller (same shape as the parent's value).
    pub fn local(&mut self, value: T, parents: Vec<(Var, Tensor<T>)>) -> Var {
        let mut ps = Vec::with_capacity(parents.len());
        let mut ng = false;
        for (v, g) in parents {
            let i = self.ix(v);
            assert_eq!(self.nodes[i].value.shape(), g.shape(), "local gradient shape mismatch");
            ng |= self.ng(i);
            ps.push((i, g));
        }
        self.push(Tensor::scalar(value), Op::Local(ps), ng)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if out.tape != self.id || out.idx >= self.nodes.len() {
            return Err(SgmError::ForeignVariable);
        }
        if self.nodes[out.idx].value.shape() != (1, 1) {
            return usage("backward expects a scalar (1x1) output");
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=out.idx).map(|_| None).collect();
        grads[out.idx] = Some(Tensor::scalar(T::one()));
        for i in (0..=out.idx).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, t: Tensor<T>| {
            if !self.nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g.matmul_nt(val(*b)));
                }
                if self.ng(*b) {
                    acc(*b, val(*a).matmul_tn(g));
                }
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                if self.ng(*b) {
                    let cols = g.cols();
                    let mut row = vec![T::zero(); cols];
                    for (k, &x) in g.data().iter().enumerate() {
                        row[k % cols] = row[k % cols] + x;
                    }
                    acc(*b, Tensor::new(1, cols, row));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x / y));
                // d(a/b)/db = -out/b
                let t = node.value.zip_map(val(*b), |o, y| -o / y);
                acc(*b, g.zip_map(&t, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * *s)),
            Op::Shift(a) => acc(*a, g.clone()),
            Op::AffineCols(a, scale) => {
                let cols = g.cols();
                let mut t = g.clone();
                for (k, x) in t.data_mut().iter_mut().enumerate() {
                    *x = *x * scale[k % cols];
                }
                acc(*a, t)
            }
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (T::one() - y * y))),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
            Op::Softplus(a) => acc(*a, g.zip_map(val(*a), |x, u| x * sigmoid(u))),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |x, u| x * (u + u))),
            Op::Sqrt(a) => acc(*a, g.zip_map(&node.value, |x, y| x / (y + y))),
            Op::Ln(a) => acc(*a, g.zip_map(val(*a), |x, u| x / u)),
            Op::Gather(a, idx) => {
                let src = val(*a);
                let cols = src.cols();
                let mut t = Tensor::zeros(src.rows(), cols);
                for (r, &s) in idx.iter().enumerate() {
                    let grow = g.row(r);
                    let trow = &mut t.data_mut()[s * cols..(s + 1) * cols];
                    trow.iter_mut().zip(grow).for_each(|(o, &x)| *o = *o + x);
                }
                acc(*a, t)
            }
            Op::Concat(ids) => {
                let mut start = 0;
                for &j in ids {
                    let w = val(j).cols();
                    if self.ng(j) {
                        let mut t = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            t.extend_from_slice(&g.row(r)[start..start + w]);
                        }
                        acc(j, Tensor::new(g.rows(), w, t));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let src = val(*a);
                let mut t = Tensor::zeros(src.rows(), src.cols());
                let w = g.cols();
                let cols = src.cols();
                for r in 0..g.rows() {
                    t.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(g.row(r));
                }
                acc(*a, t)
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::filled(r, c, g.item()))
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::filled(r, c, g.item() / T::from_usize_lossy(r * c)))
            }
            Op::Local(parents) => {
                let s = g.item();
                for (j, lg) in parents {
                    acc(*j, lg.map(|x| x * s));
                }
            }
        }
    }
}

#[inline]
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sum_of_squares_gradient() {
        let theta = vec![0.5, -1.25, 3.0, 0.0];
        let mut t = Tape::<f64>::new();
        let x = t.var(Tensor::new(1, 4, theta.clone()));
        let sq = t.square(x);
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        let gx = g.get(x).unwrap();
        for (gi, ti) in gx.data().iter().zip(&theta) {
            assert_eq!(*gi, 2.0 * ti);
        }
    }

    #[test]
    fn rejects_foreign_and_non_scalar_outputs() {
        let mut a = Tape::<f64>::new();
        let b = Tape::<f64>::new();
        let x = a.var(Tensor::new(1, 2, vec![1.0, 2.0]));
        assert!(matches!(b.backward(x), Err(SgmError::ForeignVariable)));
        assert!(matches!(a.backward(x), Err(SgmError::Usage(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let c = t.constant(Tensor::scalar(2.0));
        let x = t.var(Tensor::scalar(3.0));
        let y = t.mul(c, x);
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_relative_eq!(g.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(0.0f64), 2f64.ln());
        assert_eq!(softplus(800.0f64), 800.0);
        assert!(softplus(-800.0f64) >= 0.0);
        assert_relative_eq!(sigmoid(-800.0f64), 0.0);
    }
}
