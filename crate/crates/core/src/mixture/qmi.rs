//! Quadratic (Cauchy-Schwarz) mutual information of a Gaussian mixture.

use super::{overlap_raw, validate_dims, FiniteMixture, GaussianComponent};
use crate::error::{usage, Result};
use crate::scalar::Scalar;

/// The three inner products entering the quadratic mutual information.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QmiTerms<T> {
    /// `<p_xy, p_xy>`
    pub joint_joint: T,
    /// `<p_xy, p_x p_y>`
    pub joint_product: T,
    /// `<p_x p_y, p_x p_y>`
    pub product_product: T,
}

impl<T: Scalar> QmiTerms<T> {
    /// `-log2 <p_xy, p_x p_y> + ½ log2 <p_x p_y, p_x p_y> + ½ log2 <p_xy, p_xy>`, in bits.
    pub fn bits(&self) -> T {
        let half = T::of(0.5);
        -self.joint_product.log2() + half * self.product_product.log2() + half * self.joint_joint.log2()
    }
}

/// Quadratic mutual information between the `x_dims` and `y_dims` blocks of a
/// joint mixture, in bits. The joint is normalized first.
///
/// Diagonal covariances make every term separable, so the product `p_x p_y`
/// never has to be materialized: `<p_x p_y, p_x p_y> = <p_x,p_x><p_y,p_y>` and
/// `<p_xy, p_x p_y> = Σ_i w_i <N_i^x, p_x> <N_i^y, p_y>`.
pub fn cs_qmi<T: Scalar>(joint: &FiniteMixture<T>, x_dims: &[usize], y_dims: &[usize]) -> Result<T> {
    Ok(qmi_terms(joint, x_dims, y_dims)?.bits())
}

pub(crate) fn qmi_terms<T: Scalar>(
    joint: &FiniteMixture<T>,
    x_dims: &[usize],
    y_dims: &[usize],
) -> Result<QmiTerms<T>> {
    check_partition(joint.dim(), x_dims, y_dims)?;
    let p = joint.normalize()?;
    let px = p.marginalize(x_dims)?;
    let py = p.marginalize(y_dims)?;

    let proj_x = projections(&px);
    let proj_y = projections(&py);
    let joint_product =
        p.components().iter().zip(proj_x.iter().zip(&proj_y)).map(|(c, (&ax, &ay))| c.weight() * ax * ay).sum();

    Ok(QmiTerms {
        joint_joint: p.quadratic_norm(),
        joint_product,
        product_product: px.quadratic_norm() * py.quadratic_norm(),
    })
}

/// `<N_i, m>` for every unit-weight component `N_i` of `m`.
fn projections<T: Scalar>(m: &FiniteMixture<T>) -> Vec<T> {
    let comps = m.components();
    let mut out = vec![T::zero(); comps.len()];
    for (i, a) in comps.iter().enumerate() {
        out[i] = out[i] + a.weight() * overlap_raw(a.mean(), a.var_diag(), a.mean(), a.var_diag());
        for (j, b) in comps.iter().enumerate().skip(i + 1) {
            let o = overlap_raw(a.mean(), a.var_diag(), b.mean(), b.var_diag());
            out[i] = out[i] + b.weight() * o;
            out[j] = out[j] + a.weight() * o;
        }
    }
    out
}

fn check_partition(dim: usize, x_dims: &[usize], y_dims: &[usize]) -> Result<()> {
    validate_dims(x_dims, dim)?;
    validate_dims(y_dims, dim)?;
    if x_dims.iter().any(|k| y_dims.contains(k)) {
        return usage("x and y index sets overlap");
    }
    if x_dims.len() + y_dims.len() != dim {
        return usage("x and y index sets must cover every coordinate");
    }
    Ok(())
}

/// Materializes `a(x) b(y)` as a mixture over the joint space: one component per
/// pair, with `a`'s coordinates placed at `a_dims` and `b`'s at `b_dims`.
pub fn product_mixture<T: Scalar>(
    a: &FiniteMixture<T>,
    b: &FiniteMixture<T>,
    a_dims: &[usize],
    b_dims: &[usize],
) -> Result<FiniteMixture<T>> {
    let dim = a_dims.len() + b_dims.len();
    check_partition(dim, a_dims, b_dims)?;
    if a.dim() != a_dims.len() || b.dim() != b_dims.len() {
        return usage("factor dimensions do not match their index sets");
    }
    let mut comps = Vec::with_capacity(a.len() * b.len());
    for ca in a.components() {
        for cb in b.components() {
            let mut mean = vec![T::zero(); dim];
            let mut var = vec![T::zero(); dim];
            for (k, &d) in a_dims.iter().enumerate() {
                mean[d] = ca.mean()[k];
                var[d] = ca.var_diag()[k];
            }
            for (k, &d) in b_dims.iter().enumerate() {
                mean[d] = cb.mean()[k];
                var[d] = cb.var_diag()[k];
            }
            comps.push(GaussianComponent::new(ca.weight() * cb.weight(), mean, var)?);
        }
    }
    FiniteMixture::new(comps)
}
