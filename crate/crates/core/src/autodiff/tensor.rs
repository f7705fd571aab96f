//! Row-major dense matrices: the value type carried by tape nodes.

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor buffer does not match shape {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn scalar(v: T) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn column(v: Vec<T>) -> Self {
        Self { rows: v.len(), cols: 1, data: v }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Self::new(n, m, out)
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_nt shape mismatch");
        self.matmul(&other.transpose())
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![T::zero(); self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::new(self.cols, self.rows, out)
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_tn shape mismatch");
        let (r, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for p in 0..r {
            let arow = &self.data[p * n..(p + 1) * n];
            let brow = &other.data[p * m..(p + 1) * m];
            for (i, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Self::new(n, m, out)
    }
}
