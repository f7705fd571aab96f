//! Closed-form algebra for finite mixtures of diagonal-covariance Gaussians.
//!
//! Everything here rests on one identity: the integral of a product of two
//! Gaussians is itself a Gaussian density, evaluated at the difference of the
//! means with the summed covariance. Quadratic norms, inner products and the
//! Renyi order-2 quantities built from them are therefore finite double sums
//! over component pairs.
//!
//! Weights are stored unnormalized. Call [`FiniteMixture::normalize`] when a
//! proper density is needed.

mod component;
mod io;
mod qmi;

pub use component::{pairwise_overlap, GaussianComponent, DEFAULT_VAR_FLOOR};
pub use io::{read_mixture, write_mixture, MixtureFile};
pub use qmi::{cs_qmi, product_mixture, QmiTerms};

pub(crate) use component::{dim_mismatch, log_gauss, log_overlap_raw, overlap_raw};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{usage, Result, SgmError};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Dimension above which pair sums switch to log-sum-exp accumulation.
pub(crate) const LOG_DOMAIN_DIM: usize = 3;

/// A nonempty list of Gaussian components over `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMixture<T> {
    components: Vec<GaussianComponent<T>>,
    dim: usize,
}

impl<T: Scalar> FiniteMixture<T> {
    pub fn new(components: Vec<GaussianComponent<T>>) -> Result<Self> {
        let dim = match components.first() {
            Some(c) => c.dim(),
            None => return usage("a mixture needs at least one component"),
        };
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(dim_mismatch(dim, c.dim()));
        }
        let m = Self { components, dim };
        let total = m.total_mass();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(SgmError::Degenerate(format!("total mass must be finite and > 0, got {total}")));
        }
        Ok(m)
    }

    /// Single-component mixture.
    pub fn single(c: GaussianComponent<T>) -> Result<Self> {
        Self::new(vec![c])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<GaussianComponent<T>> {
        self.components
    }

    pub fn total_mass(&self) -> T {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Multiplies every weight by `beta`.
    pub fn scaled(&self, beta: T) -> Result<Self> {
        Self::new(self.components.iter().map(|c| c.clone().with_weight(c.weight * beta)).collect())
    }

    /// Adds `shift` to every component mean.
    pub fn translated(&self, shift: &[T]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(dim_mismatch(self.dim, shift.len()));
        }
        let comps = self
            .components
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.mean.iter_mut().zip(shift).for_each(|(m, &s)| *m = *m + s);
                c
            })
            .collect();
        Self::new(comps)
    }

    /// Weighted sum of component densities at `x`; weights used as-is.
    pub fn eval_density(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim {
            return Err(dim_mismatch(self.dim, x.len()));
        }
        Ok(self.density_unchecked(x))
    }

    #[inline]
    pub(crate) fn density_unchecked(&self, x: &[T]) -> T {
        if self.dim <= LOG_DOMAIN_DIM {
            let two_pi = T::PI() + T::PI();
            let half = T::of(0.5);
            return self
                .components
                .iter()
                .map(|c| {
                    let mut quad = T::zero();
                    let mut norm = T::one();
                    for ((&xi, &m), &v) in x.iter().zip(&c.mean).zip(&c.var_diag) {
                        let d = xi - m;
                        quad = quad + d * d / v;
                        norm = norm * two_pi * v;
                    }
                    c.weight * (-half * quad).exp() / norm.sqrt()
                })
                .sum();
        }
        self.components
            .iter()
            .map(|c| {
                c.weight * log_gauss(x.iter().zip(&c.mean).map(|(&a, &b)| a - b), c.var_diag.iter().copied()).exp()
            })
            .sum()
    }

    /// `Σ_i Σ_j w_i w_j N(m_i - m_j; 0, A_i + A_j)`, the integral of the squared density.
    pub fn quadratic_norm(&self) -> T {
        pair_sum(&self.components, &self.components, self.dim)
    }

    /// Copy with weights divided by the total mass.
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total_mass();
        if !(total > T::zero()) {
            return Err(SgmError::Degenerate("cannot normalize a mixture with zero mass".into()));
        }
        Self::new(self.components.iter().map(|c| c.clone().with_weight(c.weight / total)).collect())
    }

    /// Marginal over the listed coordinates (kept in the given order).
    pub fn marginalize(&self, dims: &[usize]) -> Result<Self> {
        validate_dims(dims, self.dim)?;
        Self::new(self.components.iter().map(|c| c.restrict(dims)).collect())
    }

    /// Draws `n` points: component index with probability proportional to weight,
    /// then a Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> PointSet<T> {
        let mut cumulative = Vec::with_capacity(self.len());
        let mut acc = 0.0f64;
        for c in &self.components {
            acc += c.weight.as_f64();
            cumulative.push(acc);
        }
        let mut out = PointSet::with_capacity(self.dim, n);
        let mut buf = vec![T::zero(); self.dim];
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
            let c = &self.components[k];
            for ((b, &m), &v) in buf.iter_mut().zip(&c.mean).zip(&c.var_diag) {
                let z: f64 = rng.sample(StandardNormal);
                *b = m + v.sqrt() * T::of(z);
            }
            out.push(&buf);
        }
        out
    }

    /// Renyi order-2 entropy of the normalized mixture, in nats.
    pub fn renyi2_entropy(&self) -> Result<T> {
        let p = self.normalize()?;
        if self.dim > LOG_DOMAIN_DIM {
            Ok(-log_pair_sum(&p.components, &p.components))
        } else {
            Ok(-p.quadratic_norm().ln())
        }
    }
}

/// `Σ_i Σ_j w_i^a w_j^b N(m_i - m_j; 0, A_i + A_j)`; symmetric, and equal to the
/// quadratic norm when `a == b`.
pub fn cross_inner<T: Scalar>(a: &FiniteMixture<T>, b: &FiniteMixture<T>) -> Result<T> {
    if a.dim != b.dim {
        return Err(dim_mismatch(a.dim, b.dim));
    }
    Ok(pair_sum(&a.components, &b.components, a.dim))
}

/// Logarithm of [`cross_inner`], accumulated with log-sum-exp.
pub fn log_cross_inner<T: Scalar>(a: &FiniteMixture<T>, b: &FiniteMixture<T>) -> Result<T> {
    if a.dim != b.dim {
        return Err(dim_mismatch(a.dim, b.dim));
    }
    Ok(log_pair_sum(&a.components, &b.components))
}

fn pair_sum<T: Scalar>(a: &[GaussianComponent<T>], b: &[GaussianComponent<T>], dim: usize) -> T {
    if dim > LOG_DOMAIN_DIM {
        return log_pair_sum(a, b).exp();
    }
    let mut total = T::zero();
    for ca in a {
        let mut row = T::zero();
        for cb in b {
            row = row + cb.weight * overlap_raw(&ca.mean, &ca.var_diag, &cb.mean, &cb.var_diag);
        }
        total = total + ca.weight * row;
    }
    total
}

fn log_pair_sum<T: Scalar>(a: &[GaussianComponent<T>], b: &[GaussianComponent<T>]) -> T {
    let mut terms = Vec::with_capacity(a.len() * b.len());
    for ca in a {
        for cb in b {
            if ca.weight > T::zero() && cb.weight > T::zero() {
                terms.push(
                    ca.weight.ln() + cb.weight.ln() + log_overlap_raw(&ca.mean, &ca.var_diag, &cb.mean, &cb.var_diag),
                );
            }
        }
    }
    log_sum_exp(&terms)
}

pub(crate) fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let max = terms.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<T>().ln()
}

pub(crate) fn validate_dims(dims: &[usize], dim: usize) -> Result<()> {
    if dims.is_empty() {
        return usage("index set must be nonempty");
    }
    if let Some(&k) = dims.iter().find(|&&k| k >= dim) {
        return usage(format!("index {k} out of range for dimension {dim}"));
    }
    let mut seen = vec![false; dim];
    for &k in dims {
        if std::mem::replace(&mut seen[k], true) {
            return usage(format!("index {k} listed twice"));
        }
    }
    Ok(())
}
