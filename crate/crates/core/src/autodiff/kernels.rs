//! Fused Gaussian-overlap kernels recorded as scalar tape nodes.
//!
//! Each kernel takes mixture heads `w` (n×1), `m` (n×d) and `a` (n×d, diagonal
//! variances), returns a scalar mean, and hands the tape its exact local
//! gradient so the backward sweep is a scaling.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Dimension above which kernels evaluate the normalizer in log domain.
const LOG_DOMAIN_DIM: usize = 3;

struct Heads<'a, T> {
    w: &'a [T],
    m: &'a [T],
    a: &'a [T],
    n: usize,
    d: usize,
}

fn heads<'a, T: Scalar>(tape: &'a Tape<T>, w: Var, m: Var, a: Var) -> Heads<'a, T> {
    let (wv, mv, av) = (tape.value(w), tape.value(m), tape.value(a));
    assert_eq!(wv.cols(), 1, "weight head must be a column");
    assert_eq!(mv.shape(), av.shape(), "mean and variance heads differ in shape");
    assert_eq!(wv.rows(), mv.rows(), "weight and mean heads differ in length");
    Heads { w: wv.data(), m: mv.data(), a: av.data(), n: mv.rows(), d: mv.cols() }
}

/// Gaussian density `N(delta; 0, diag(s))` from the quadratic form and the
/// product (or log-sum) of the variances.
#[inline]
fn gauss<T: Scalar>(quad: T, norm: T, log_domain: bool) -> T {
    let half = T::of(0.5);
    if log_domain {
        (-half * (quad + norm)).exp()
    } else {
        (-half * quad).exp() / norm.sqrt()
    }
}

/// `(1/n²) Σ_i Σ_j w_i w_j N(m_i - m_j; 0, a_i + a_j)`: the closed-form quadratic
/// norm of the mixture with weights `w_i / n`.
pub fn self_overlap_mean<T: Scalar>(tape: &mut Tape<T>, w: Var, m: Var, a: Var) -> Var {
    let h = heads(tape, w, m, a);
    let (n, d) = (h.n, h.d);
    let log_domain = d > LOG_DOMAIN_DIM;
    let two_pi = T::PI() + T::PI();
    let two = T::of(2.0);

    let mut gw = vec![T::zero(); n];
    let mut gm = vec![T::zero(); n * d];
    let mut ga = vec![T::zero(); n * d];
    let mut total = T::zero();
    let mut delta = vec![T::zero(); d];
    let mut inv_s = vec![T::zero(); d];
    let mut acc_m = vec![T::zero(); d];
    let mut acc_a = vec![T::zero(); d];

    for i in 0..n {
        let (mi, ai, wi) = (&h.m[i * d..(i + 1) * d], &h.a[i * d..(i + 1) * d], h.w[i]);

        // Diagonal term: delta vanishes, only the variance gradient survives.
        let mut norm = if log_domain { T::zero() } else { T::one() };
        for &x in ai {
            let s = x + x;
            norm = if log_domain { norm + (two_pi * s).ln() } else { norm * two_pi * s };
        }
        let phi = gauss(T::zero(), norm, log_domain);
        let ww = wi * wi * phi;
        total = total + ww;
        let mut gwi = two * wi * phi;
        for (g, &x) in ga[i * d..(i + 1) * d].iter_mut().zip(ai) {
            *g = *g - ww / (x + x);
        }

        acc_m.iter_mut().for_each(|v| *v = T::zero());
        acc_a.iter_mut().for_each(|v| *v = T::zero());
        let (_, rest_m) = gm.split_at_mut((i + 1) * d);
        let (_, rest_a) = ga.split_at_mut((i + 1) * d);
        let rows = h.m[(i + 1) * d..]
            .chunks_exact(d)
            .zip(h.a[(i + 1) * d..].chunks_exact(d))
            .zip(&h.w[i + 1..])
            .zip(rest_m.chunks_exact_mut(d).zip(rest_a.chunks_exact_mut(d)))
            .zip(&mut gw[i + 1..]);
        for ((((mj, aj), &wj), (gmj, gaj)), gwj) in rows {
            let mut quad = T::zero();
            let mut norm = if log_domain { T::zero() } else { T::one() };
            for k in 0..d {
                let s = ai[k] + aj[k];
                let dk = mi[k] - mj[k];
                let is = T::one() / s;
                delta[k] = dk;
                inv_s[k] = is;
                quad = quad + dk * dk * is;
                norm = if log_domain { norm + (two_pi * s).ln() } else { norm * two_pi * s };
            }
            let phi = gauss(quad, norm, log_domain);
            if phi == T::zero() {
                continue;
            }
            let ww = wi * wj * phi;
            total = total + two * ww;
            gwi = gwi + two * wj * phi;
            *gwj = *gwj + two * wi * phi;
            for k in 0..d {
                let t = two * ww * delta[k] * inv_s[k];
                acc_m[k] = acc_m[k] - t;
                gmj[k] = gmj[k] + t;
                let u = ww * (delta[k] * delta[k] * inv_s[k] - T::one()) * inv_s[k];
                acc_a[k] = acc_a[k] + u;
                gaj[k] = gaj[k] + u;
            }
        }
        gw[i] = gw[i] + gwi;
        for k in 0..d {
            gm[i * d + k] = gm[i * d + k] + acc_m[k];
            ga[i * d + k] = ga[i * d + k] + acc_a[k];
        }
    }
    let scale = T::one() / T::from_usize_lossy(n * n);
    finish(tape, total * scale, scale, (w, gw), (m, gm), (a, ga), n, d)
}

/// `(1/(n·B)) Σ_i Σ_b w_i N(x_b - m_i; 0, a_i)`: the mean of the mixture density
/// (weights `w_i / n`) over the points `x`.
pub fn density_mean<T: Scalar>(tape: &mut Tape<T>, w: Var, m: Var, a: Var, x: &Tensor<T>) -> Var {
    let h = heads(tape, w, m, a);
    let (n, d) = (h.n, h.d);
    assert_eq!(x.cols(), d, "data dimension does not match mixture");
    let b = x.rows();
    let two_pi = T::PI() + T::PI();
    let half = T::of(0.5);

    let mut gw = vec![T::zero(); n];
    let mut gm = vec![T::zero(); n * d];
    let mut ga = vec![T::zero(); n * d];
    let mut total = T::zero();
    let mut inv_a = vec![T::zero(); d];

    for i in 0..n {
        let (mi, ai, wi) = (&h.m[i * d..(i + 1) * d], &h.a[i * d..(i + 1) * d], h.w[i]);
        let mut log_norm = T::zero();
        for k in 0..d {
            inv_a[k] = T::one() / ai[k];
            log_norm = log_norm - half * (two_pi * ai[k]).ln();
        }
        let mut phi_sum = T::zero();
        for r in 0..b {
            let xr = x.row(r);
            let mut quad = T::zero();
            for k in 0..d {
                let dk = mi[k] - xr[k];
                quad = quad + dk * dk * inv_a[k];
            }
            let phi = (log_norm - half * quad).exp();
            if phi == T::zero() {
                continue;
            }
            phi_sum = phi_sum + phi;
            let wp = wi * phi;
            for k in 0..d {
                let dk = mi[k] - xr[k];
                gm[i * d + k] = gm[i * d + k] - wp * dk * inv_a[k];
                ga[i * d + k] = ga[i * d + k] + half * wp * (dk * dk * inv_a[k] - T::one()) * inv_a[k];
            }
        }
        gw[i] = phi_sum;
        total = total + wi * phi_sum;
    }
    let scale = T::one() / T::from_usize_lossy(n * b);
    finish(tape, total * scale, scale, (w, gw), (m, gm), (a, ga), n, d)
}

/// `(1/n) Σ_i w_i N(y_i - m_i; 0, a_i)`: each component evaluated at its own target row.
pub fn row_density_mean<T: Scalar>(tape: &mut Tape<T>, w: Var, m: Var, a: Var, y: &Tensor<T>) -> Var {
    let h = heads(tape, w, m, a);
    let (n, d) = (h.n, h.d);
    assert_eq!(y.shape(), (n, d), "targets must align with mixture rows");
    let two_pi = T::PI() + T::PI();
    let half = T::of(0.5);

    let mut gw = vec![T::zero(); n];
    let mut gm = vec![T::zero(); n * d];
    let mut ga = vec![T::zero(); n * d];
    let mut total = T::zero();
    for i in 0..n {
        let (mi, ai, wi, yi) = (&h.m[i * d..(i + 1) * d], &h.a[i * d..(i + 1) * d], h.w[i], y.row(i));
        let mut lg = T::zero();
        for k in 0..d {
            let dk = mi[k] - yi[k];
            lg = lg - half * ((two_pi * ai[k]).ln() + dk * dk / ai[k]);
        }
        let phi = lg.exp();
        total = total + wi * phi;
        gw[i] = phi;
        let wp = wi * phi;
        for k in 0..d {
            let dk = mi[k] - yi[k];
            let ia = T::one() / ai[k];
            gm[i * d + k] = -wp * dk * ia;
            ga[i * d + k] = half * wp * (dk * dk * ia - T::one()) * ia;
        }
    }
    let scale = T::one() / T::from_usize_lossy(n);
    finish(tape, total * scale, scale, (w, gw), (m, gm), (a, ga), n, d)
}

/// `(1/n) Σ_i w_i w'_i N(m_i - m'_i; 0, a_i + a'_i)`: row-paired overlaps of two
/// equally long component lists.
pub fn paired_overlap_mean<T: Scalar>(tape: &mut Tape<T>, w1: Var, m1: Var, a1: Var, w2: Var, m2: Var, a2: Var) -> Var {
    block_overlap_mean(tape, 1, w1, m1, a1, w2, m2, a2)
}

/// Block-paired overlaps: rows `p·b .. (p+1)·b` of both lists form block `p`,
/// and the result is `(1/P) Σ_p (1/b²) Σ_{i,j ∈ p} w_i w'_j N(m_i − m'_j; 0, a_i + a'_j)`
/// over the `P = n / b` blocks. `b = 1` is [`paired_overlap_mean`].
#[allow(clippy::too_many_arguments)]
pub fn block_overlap_mean<T: Scalar>(
    tape: &mut Tape<T>,
    block: usize,
    w1: Var,
    m1: Var,
    a1: Var,
    w2: Var,
    m2: Var,
    a2: Var,
) -> Var {
    let h1 = heads(tape, w1, m1, a1);
    let h2 = heads(tape, w2, m2, a2);
    let (n, d) = (h1.n, h1.d);
    assert_eq!((h2.n, h2.d), (n, d), "paired heads differ in shape");
    assert!(block > 0 && n % block == 0, "rows must split into whole blocks");
    let two_pi = T::PI() + T::PI();
    let half = T::of(0.5);

    let mut gw1 = vec![T::zero(); n];
    let mut gw2 = vec![T::zero(); n];
    let mut gm1 = vec![T::zero(); n * d];
    let mut gm2 = vec![T::zero(); n * d];
    let mut ga1 = vec![T::zero(); n * d];
    let mut ga2 = vec![T::zero(); n * d];
    let mut total = T::zero();
    for start in (0..n).step_by(block) {
        for i in start..start + block {
            for j in start..start + block {
                let mut lg = T::zero();
                for k in 0..d {
                    let s = h1.a[i * d + k] + h2.a[j * d + k];
                    let dk = h1.m[i * d + k] - h2.m[j * d + k];
                    lg = lg - half * ((two_pi * s).ln() + dk * dk / s);
                }
                let phi = lg.exp();
                if phi == T::zero() {
                    continue;
                }
                let ww = h1.w[i] * h2.w[j] * phi;
                total = total + ww;
                gw1[i] = gw1[i] + h2.w[j] * phi;
                gw2[j] = gw2[j] + h1.w[i] * phi;
                for k in 0..d {
                    let s = h1.a[i * d + k] + h2.a[j * d + k];
                    let dk = h1.m[i * d + k] - h2.m[j * d + k];
                    gm1[i * d + k] = gm1[i * d + k] - ww * dk / s;
                    gm2[j * d + k] = gm2[j * d + k] + ww * dk / s;
                    let g = half * ww * (dk * dk / s - T::one()) / s;
                    ga1[i * d + k] = ga1[i * d + k] + g;
                    ga2[j * d + k] = ga2[j * d + k] + g;
                }
            }
        }
    }
    let scale = T::one() / T::from_usize_lossy(n * block);
    let sc = |v: Vec<T>, r: usize, c: usize| Tensor::new(r, c, v.into_iter().map(|x| x * scale).collect());
    tape.local(
        total * scale,
        vec![
            (w1, sc(gw1, n, 1)),
            (m1, sc(gm1, n, d)),
            (a1, sc(ga1, n, d)),
            (w2, sc(gw2, n, 1)),
            (m2, sc(gm2, n, d)),
            (a2, sc(ga2, n, d)),
        ],
    )
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    tape: &mut Tape<T>,
    value: T,
    scale: T,
    (w, gw): (Var, Vec<T>),
    (m, gm): (Var, Vec<T>),
    (a, ga): (Var, Vec<T>),
    n: usize,
    d: usize,
) -> Var {
    let sc = |v: Vec<T>, c: usize| Tensor::new(n, c, v.into_iter().map(|x| x * scale).collect());
    tape.local(value, vec![(w, sc(gw, 1)), (m, sc(gm, d)), (a, sc(ga, d))])
}
