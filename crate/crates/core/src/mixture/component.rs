use serde::{Deserialize, Serialize};

use super::LOG_DOMAIN_DIM;
use crate::error::{usage, Result, SgmError};
use crate::scalar::Scalar;

/// Default lower bound on every per-dimension variance.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;

/// One weighted Gaussian with diagonal covariance. The weight is an
/// unnormalized mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent<T> {
    #[serde(rename = "w")]
    pub(crate) weight: T,
    pub(crate) mean: Vec<T>,
    #[serde(rename = "var")]
    pub(crate) var_diag: Vec<T>,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(weight: T, mean: Vec<T>, var_diag: Vec<T>) -> Result<Self> {
        if !(weight >= T::zero()) || !weight.is_finite() {
            return usage(format!("component weight must be finite and >= 0, got {weight}"));
        }
        if mean.is_empty() || mean.len() != var_diag.len() {
            return usage("mean and variance must be nonempty and of equal length");
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return usage("component mean is not finite");
        }
        if var_diag.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return usage("component variances must be finite and > 0");
        }
        Ok(Self { weight, mean, var_diag })
    }

    /// Same as [`GaussianComponent::new`], but clamps every variance to at least `floor`.
    pub fn floored(weight: T, mean: Vec<T>, var_diag: Vec<T>, floor: T) -> Result<Self> {
        let var_diag = var_diag.into_iter().map(|v| if v < floor { floor } else { v }).collect();
        Self::new(weight, mean, var_diag)
    }

    /// Unit-weight isotropic standard Gaussian in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self { weight: T::one(), mean: vec![T::zero(); dim], var_diag: vec![T::one(); dim] }
    }

    #[inline]
    pub fn weight(&self) -> T {
        self.weight
    }

    #[inline]
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    #[inline]
    pub fn var_diag(&self) -> &[T] {
        &self.var_diag
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    /// Normalized density of the component (weight excluded) at `x`.
    pub fn unit_density(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(dim_mismatch(self.dim(), x.len()));
        }
        Ok(log_gauss(x.iter().zip(&self.mean).map(|(&a, &b)| a - b), self.var_diag.iter().copied()).exp())
    }

    /// Restriction to a subset of coordinates (exact for diagonal covariance).
    pub fn restrict(&self, dims: &[usize]) -> Self {
        Self {
            weight: self.weight,
            mean: dims.iter().map(|&k| self.mean[k]).collect(),
            var_diag: dims.iter().map(|&k| self.var_diag[k]).collect(),
        }
    }
}

pub(crate) fn dim_mismatch(expected: usize, got: usize) -> SgmError {
    SgmError::Usage(format!("dimension mismatch: expected {expected}, got {got}"))
}

/// `ln N(delta; 0, diag(var))`.
#[inline]
pub(crate) fn log_gauss<T: Scalar>(delta: impl Iterator<Item = T>, var: impl Iterator<Item = T>) -> T {
    let two_pi = T::PI() + T::PI();
    let half = T::of(0.5);
    let mut acc = T::zero();
    for (d, v) in delta.zip(var) {
        acc = acc + (two_pi * v).ln() + d * d / v;
    }
    -half * acc
}

/// Gaussian density with covariance `A_a + A_b` evaluated at `m_a - m_b`, in log domain.
#[inline]
pub(crate) fn log_overlap_raw<T: Scalar>(ma: &[T], va: &[T], mb: &[T], vb: &[T]) -> T {
    log_gauss(ma.iter().zip(mb).map(|(&a, &b)| a - b), va.iter().zip(vb).map(|(&a, &b)| a + b))
}

/// Same overlap as [`log_overlap_raw`] but exponentiated, computed directly
/// for low dimensions where the variance product cannot under- or overflow.
#[inline]
pub(crate) fn overlap_raw<T: Scalar>(ma: &[T], va: &[T], mb: &[T], vb: &[T]) -> T {
    if ma.len() > LOG_DOMAIN_DIM {
        return log_overlap_raw(ma, va, mb, vb).exp();
    }
    let two_pi = T::PI() + T::PI();
    let mut quad = T::zero();
    let mut norm = T::one();
    for k in 0..ma.len() {
        let s = va[k] + vb[k];
        let d = ma[k] - mb[k];
        quad = quad + d * d / s;
        norm = norm * two_pi * s;
    }
    (-T::of(0.5) * quad).exp() / norm.sqrt()
}

/// Integral of the product of two unit-weight Gaussians, `N(m_a - m_b; 0, A_a + A_b)`.
/// Weights are not included.
pub fn pairwise_overlap<T: Scalar>(a: &GaussianComponent<T>, b: &GaussianComponent<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(dim_mismatch(a.dim(), b.dim()));
    }
    Ok(overlap_raw(&a.mean, &a.var_diag, &b.mean, &b.var_diag))
}
