//! Dense row-major point sets.

use crate::error::{usage, Result};
use crate::scalar::Scalar;

/// `len` points of dimension `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return usage("point dimension must be positive");
        }
        if !data.len().is_multiple_of(dim) {
            return usage(format!("buffer of length {} is not a multiple of dimension {dim}", data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.len(),
            None => return usage("cannot infer dimension of an empty row list"),
        };
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return usage("rows have inconsistent dimensions");
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0);
        Self { dim, data: Vec::with_capacity(dim * n) }
    }

    pub fn push(&mut self, p: &[T]) {
        assert_eq!(p.len(), self.dim, "point dimension mismatch");
        self.data.extend_from_slice(p);
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Picks rows by index (repeats allowed).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, idx.len());
        for &i in idx {
            out.push(self.row(i));
        }
        out
    }

    /// Restricts every point to the given coordinates.
    pub fn columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.dim) {
            return usage("column selection is empty or out of range");
        }
        let mut data = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self::new(cols.len(), data)
    }

    /// Per-coordinate (min, max).
    pub fn bounds(&self) -> Vec<(T, T)> {
        let mut b = vec![(T::infinity(), T::neg_infinity()); self.dim];
        for r in self.rows() {
            for (k, &v) in r.iter().enumerate() {
                b[k].0 = b[k].0.min(v);
                b[k].1 = b[k].1.max(v);
            }
        }
        b
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for r in self.rows() {
            for (acc, &v) in m.iter_mut().zip(r) {
                *acc = *acc + v;
            }
        }
        let n = T::from_usize_lossy(self.len().max(1));
        m.iter_mut().for_each(|v| *v = *v / n);
        m
    }

    /// Concatenates two point sets of equal dimension row-wise.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return usage("cannot concatenate point sets of different dimension");
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.dim, data)
    }

    /// Joins two equally long point sets column-wise: `[a | b]`.
    pub fn zip_columns(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return usage("cannot zip point sets of different length");
        }
        let dim = self.dim + other.dim;
        let mut data = Vec::with_capacity(self.len() * dim);
        for (a, b) in self.rows().zip(other.rows()) {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Self::new(dim, data)
    }
}
