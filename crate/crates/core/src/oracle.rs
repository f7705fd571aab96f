//! Reference values by dense midpoint quadrature (1-D and 2-D) or randomized
//! quasi-Monte Carlo (3-D and up).
//!
//! Everything here works on plain `f64` evaluators. The mixture helpers only
//! call [`FiniteMixture::eval_density`], never the closed forms they check.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Result, SgmError};
use crate::mixture::FiniteMixture;

/// Smallest accepted grid resolution per axis.
pub const MIN_RESOLUTION: usize = 101;
/// Largest relative change tolerated between the grid and its half-resolution check.
pub const CONVERGENCE_TOL: f64 = 1e-4;
/// Half-width of [`Bounds::around`] boxes, in component standard deviations.
pub const DEFAULT_SIGMAS: f64 = 8.0;

const QMC_SHIFTS: usize = 16;
const QMC_SEED: u64 = 0x0a11_ce00;
const HALTON_PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Axis-aligned integration box.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return usage(format!("bounds need matching non-empty corners, got {} and {}", lo.len(), hi.len()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return usage("bounds must be finite with lo < hi on every axis");
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Smallest box holding every component's mean ± `sigmas` standard deviations.
    pub fn around(m: &FiniteMixture<f64>, sigmas: f64) -> Self {
        let d = m.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in m.components() {
            for k in 0..d {
                let r = sigmas * c.var_diag()[k].sqrt();
                lo[k] = lo[k].min(c.mean()[k] - r);
                hi[k] = hi[k].max(c.mean()[k] + r);
            }
        }
        Self { lo, hi }
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return usage("cannot join bounds of different dimension");
        }
        Ok(Self {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// An integral together with the evidence for trusting it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Same quantity at half the resolution (grids) or equal to `value` (QMC).
    pub check: f64,
    pub resolution: usize,
    /// Standard error across random shifts; only set for QMC.
    pub std_error: Option<f64>,
    /// Grid columns left out because their marginal mass was zero.
    pub skipped: usize,
}

impl Quadrature {
    pub fn rel_change(&self) -> f64 {
        rel_diff(self.value, self.check)
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn midpoints(lo: f64, hi: f64, r: usize) -> (Vec<f64>, f64) {
    let h = (hi - lo) / r as f64;
    ((0..r).map(|i| lo + (i as f64 + 0.5) * h).collect(), h)
}

fn coarse(resolution: usize) -> usize {
    (resolution / 2).max(2)
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION {
        return usage(format!("resolution must be at least {MIN_RESOLUTION}, got {resolution}"));
    }
    Ok(())
}

/// Runs `at(resolution)` and `at(resolution / 2)` and insists they agree.
fn refine<F: FnMut(usize) -> Result<(f64, usize)>>(mut at: F, resolution: usize) -> Result<Quadrature> {
    check_resolution(resolution)?;
    let (value, skipped) = at(resolution)?;
    let (check, _) = at(coarse(resolution))?;
    let q = Quadrature { value, check, resolution, std_error: None, skipped };
    if q.rel_change() >= CONVERGENCE_TOL {
        return Err(SgmError::Quadrature(format!(
            "no convergence at resolution {resolution}: {value:e} vs {check:e} at half resolution"
        )));
    }
    Ok(q)
}

fn non_finite(x: &[f64], v: f64) -> SgmError {
    SgmError::Quadrature(format!("integrand is {v} at {x:?}"))
}

/// Midpoint sum over a 1-D or 2-D grid.
fn grid_sum<F: FnMut(&[f64]) -> f64>(f: &mut F, b: &Bounds, r: usize) -> Result<f64> {
    match b.dim() {
        1 => {
            let (xs, h) = midpoints(b.lo[0], b.hi[0], r);
            let mut acc = 0.0;
            for x in xs {
                let v = f(&[x]);
                if !v.is_finite() {
                    return Err(non_finite(&[x], v));
                }
                acc += v;
            }
            Ok(acc * h)
        }
        2 => {
            let (xs, hx) = midpoints(b.lo[0], b.hi[0], r);
            let (ys, hy) = midpoints(b.lo[1], b.hi[1], r);
            let mut acc = 0.0;
            for &x in &xs {
                let mut row = 0.0;
                for &y in &ys {
                    let v = f(&[x, y]);
                    if !v.is_finite() {
                        return Err(non_finite(&[x, y], v));
                    }
                    row += v;
                }
                acc += row;
            }
            Ok(acc * hx * hy)
        }
        d => usage(format!("grid quadrature handles 1-D and 2-D, got {d}-D")),
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// Halton points with Cranley-Patterson shifts; `n` evaluations per shift.
fn qmc<F: FnMut(&[f64]) -> f64>(f: &mut F, b: &Bounds, n: usize) -> Result<Quadrature> {
    let d = b.dim();
    if d > HALTON_PRIMES.len() {
        return usage(format!("quasi-Monte Carlo supports up to {} dimensions", HALTON_PRIMES.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(QMC_SEED);
    let vol = b.volume();
    let mut estimates = Vec::with_capacity(QMC_SHIFTS);
    let mut x = vec![0.0; d];
    for _ in 0..QMC_SHIFTS {
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for i in 1..=n as u64 {
            for k in 0..d {
                let u = (radical_inverse(i, HALTON_PRIMES[k]) + shift[k]).fract();
                x[k] = b.lo[k] + u * (b.hi[k] - b.lo[k]);
            }
            let v = f(&x);
            if !v.is_finite() {
                return Err(non_finite(&x, v));
            }
            acc += v;
        }
        estimates.push(vol * acc / n as f64);
    }
    let s = QMC_SHIFTS as f64;
    let mean = estimates.iter().sum::<f64>() / s;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (s - 1.0);
    Ok(Quadrature { value: mean, check: mean, resolution: n, std_error: Some((var / s).sqrt()), skipped: 0 })
}

/// `∫ f` over `bounds`. 1-D/2-D: midpoint rule with `resolution` points per
/// axis, cross-checked against half the resolution. 3-D and up: shifted
/// Halton points, `resolution²` per shift, with a standard error.
pub fn grid_integrate<F: Fn(&[f64]) -> f64>(f: F, bounds: &Bounds, resolution: usize) -> Result<Quadrature> {
    let mut g = |x: &[f64]| f(x);
    if bounds.dim() > 2 {
        check_resolution(resolution)?;
        return qmc(&mut g, bounds, resolution * resolution);
    }
    refine(|r| Ok((grid_sum(&mut g, bounds, r)?, 0)), resolution)
}

/// `log ∫ p²/q` in nats, failing when `q` vanishes somewhere `p` does not.
pub fn oracle_d2<P, Q>(p: P, q: Q, bounds: &Bounds, resolution: usize) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    let violations = Cell::new(0usize);
    let integrand = |x: &[f64]| {
        let pv = p(x);
        if pv == 0.0 {
            return 0.0;
        }
        let qv = q(x);
        if qv <= 0.0 {
            violations.set(violations.get() + 1);
            return 0.0;
        }
        pv * pv / qv
    };
    let quad = grid_integrate(integrand, bounds, resolution)?;
    if violations.get() > 0 {
        return Err(SgmError::Quadrature(format!(
            "q vanishes at {} grid points where p is positive",
            violations.get()
        )));
    }
    if !(quad.value > 0.0) {
        return Err(SgmError::Quadrature("p has no mass on the grid".into()));
    }
    Ok(quad.value.ln())
}

/// `∫∫ p²(y|x) p(x) dy dx` for a 2-D joint evaluated at `[x, y]`. Columns whose
/// marginal `p(x)` is zero carry no mass and are skipped (counted in the result).
pub fn oracle_conditional_norm<F: Fn(&[f64]) -> f64>(
    joint: F,
    bounds: &Bounds,
    resolution: usize,
) -> Result<Quadrature> {
    if bounds.dim() != 2 {
        return usage("conditional norm needs a 2-D joint laid out as [x, y]");
    }
    refine(
        |r| {
            let (xs, hx) = midpoints(bounds.lo[0], bounds.hi[0], r);
            // The y step cancels between p² and p(x).
            let (ys, _) = midpoints(bounds.lo[1], bounds.hi[1], r);
            let (mut total, mut skipped) = (0.0, 0);
            for &x in &xs {
                let (mut px, mut sq) = (0.0, 0.0);
                for &y in &ys {
                    let v = joint(&[x, y]);
                    if !v.is_finite() {
                        return Err(non_finite(&[x, y], v));
                    }
                    px += v;
                    sq += v * v;
                }
                if px > 0.0 {
                    total += sq / px;
                } else {
                    skipped += 1;
                }
            }
            Ok((total * hx, skipped))
        },
        resolution,
    )
}

fn density<'a>(m: &'a FiniteMixture<f64>) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x| m.eval_density(x).unwrap_or(f64::NAN)
}

/// `∫ p²` of a mixture over its ±8σ box.
pub fn quadratic_norm(m: &FiniteMixture<f64>, resolution: usize) -> Result<Quadrature> {
    let f = density(m);
    grid_integrate(|x| f(x).powi(2), &Bounds::around(m, DEFAULT_SIGMAS), resolution)
}

/// `∫ p q` over the union of both ±8σ boxes.
pub fn cross_inner(a: &FiniteMixture<f64>, b: &FiniteMixture<f64>, resolution: usize) -> Result<Quadrature> {
    let bounds = Bounds::around(a, DEFAULT_SIGMAS).union(&Bounds::around(b, DEFAULT_SIGMAS))?;
    let (fa, fb) = (density(a), density(b));
    grid_integrate(|x| fa(x) * fb(x), &bounds, resolution)
}

/// `-ln(∫p² / (∫p)²)`, both integrals by quadrature.
pub fn renyi2_entropy(m: &FiniteMixture<f64>, resolution: usize) -> Result<f64> {
    let f = density(m);
    let bounds = Bounds::around(m, DEFAULT_SIGMAS);
    let mass = grid_integrate(&f, &bounds, resolution)?.value;
    let sq = grid_integrate(|x| f(x).powi(2), &bounds, resolution)?.value;
    Ok(-(sq / (mass * mass)).ln())
}

/// Tabulated joint with its grid marginals, for the 2-D mutual-information oracles.
struct JointGrid {
    p: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    hx: f64,
    hy: f64,
    r: usize,
}

impl JointGrid {
    fn new(f: &dyn Fn(&[f64]) -> f64, b: &Bounds, r: usize) -> Result<Self> {
        if b.dim() != 2 {
            return usage("mutual-information oracles need a 2-D joint");
        }
        let (xs, hx) = midpoints(b.lo[0], b.hi[0], r);
        let (ys, hy) = midpoints(b.lo[1], b.hi[1], r);
        let mut p = Vec::with_capacity(r * r);
        for &x in &xs {
            for &y in &ys {
                let v = f(&[x, y]);
                if !v.is_finite() {
                    return Err(non_finite(&[x, y], v));
                }
                p.push(v);
            }
        }
        let mass: f64 = p.iter().sum::<f64>() * hx * hy;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(SgmError::Quadrature("joint has no finite mass on the grid".into()));
        }
        p.iter_mut().for_each(|v| *v /= mass);
        let mut px = vec![0.0; r];
        let mut py = vec![0.0; r];
        for i in 0..r {
            for j in 0..r {
                px[i] += p[i * r + j] * hy;
                py[j] += p[i * r + j] * hx;
            }
        }
        Ok(Self { p, px, py, hx, hy, r })
    }

    fn qmi_bits(&self) -> f64 {
        let (mut jj, mut jm) = (0.0, 0.0);
        for i in 0..self.r {
            for j in 0..self.r {
                let v = self.p[i * self.r + j];
                jj += v * v;
                jm += v * self.px[i] * self.py[j];
            }
        }
        let cell = self.hx * self.hy;
        let (jj, jm) = (jj * cell, jm * cell);
        let mx: f64 = self.px.iter().map(|v| v * v).sum::<f64>() * self.hx;
        let my: f64 = self.py.iter().map(|v| v * v).sum::<f64>() * self.hy;
        -jm.log2() + 0.5 * (mx * my).log2() + 0.5 * jj.log2()
    }

    fn d2(&self) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.r {
            for j in 0..self.r {
                let v = self.p[i * self.r + j];
                if v == 0.0 {
                    continue;
                }
                let q = self.px[i] * self.py[j];
                if q <= 0.0 {
                    return Err(SgmError::Quadrature("product of marginals vanishes under the joint".into()));
                }
                acc += v * v / q;
            }
        }
        Ok((acc * self.hx * self.hy).ln())
    }
}

/// Like [`refine`] for logarithms of integrals, where the check is absolute.
fn refine_log<F: FnMut(usize) -> Result<f64>>(mut at: F, resolution: usize) -> Result<f64> {
    check_resolution(resolution)?;
    let value = at(resolution)?;
    let check = at(coarse(resolution))?;
    if !((value - check).abs() < CONVERGENCE_TOL) {
        return Err(SgmError::Quadrature(format!(
            "no convergence at resolution {resolution}: {value:e} vs {check:e} at half resolution"
        )));
    }
    Ok(value)
}

/// Quadratic mutual information (bits) between the two coordinates of a 2-D
/// density, with marginals obtained by summing the grid.
pub fn cs_qmi_of<F: Fn(&[f64]) -> f64>(f: F, bounds: &Bounds, resolution: usize) -> Result<f64> {
    refine_log(|r| Ok(JointGrid::new(&f, bounds, r)?.qmi_bits()), resolution)
}

/// `log ∫ p_xy² / (p_x p_y)` in nats for a 2-D density, marginals from the grid.
pub fn renyi_mi_of<F: Fn(&[f64]) -> f64>(f: F, bounds: &Bounds, resolution: usize) -> Result<f64> {
    refine_log(|r| JointGrid::new(&f, bounds, r)?.d2(), resolution)
}

/// [`cs_qmi_of`] for a 2-D mixture over its ±8σ box.
pub fn cs_qmi(m: &FiniteMixture<f64>, resolution: usize) -> Result<f64> {
    cs_qmi_of(density(m), &Bounds::around(m, DEFAULT_SIGMAS), resolution)
}

/// [`renyi_mi_of`] for a 2-D mixture over its ±8σ box.
pub fn renyi_mi(m: &FiniteMixture<f64>, resolution: usize) -> Result<f64> {
    renyi_mi_of(density(m), &Bounds::around(m, DEFAULT_SIGMAS), resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GaussianComponent;

    fn std_normal(x: &[f64]) -> f64 {
        (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn normal(mean: f64, var: f64) -> impl Fn(&[f64]) -> f64 {
        move |x| (-0.5 * (x[0] - mean).powi(2) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn unit_mass_and_square() {
        let b = Bounds::cube(1, -8.0, 8.0).unwrap();
        let q = grid_integrate(std_normal, &b, 2001).unwrap();
        assert!((q.value - 1.0).abs() < 1e-8, "{}", q.value);
        let sq = grid_integrate(|x| std_normal(x).powi(2), &b, 2001).unwrap();
        assert!((sq.value - 0.282095).abs() < 1e-6, "{}", sq.value);
    }

    #[test]
    fn rejects_low_resolution_and_nan() {
        let b = Bounds::cube(1, -1.0, 1.0).unwrap();
        assert!(matches!(grid_integrate(std_normal, &b, 50), Err(SgmError::Usage(_))));
        assert!(matches!(grid_integrate(|_| f64::NAN, &b, 101), Err(SgmError::Quadrature(_))));
    }

    #[test]
    fn unresolved_integrand_fails_convergence() {
        let b = Bounds::cube(1, -1.0, 1.0).unwrap();
        let spike = normal(0.013, 1e-6);
        assert!(matches!(grid_integrate(spike, &b, 101), Err(SgmError::Quadrature(_))));
    }

    #[test]
    fn d2_cases() {
        let b = Bounds::cube(1, -12.0, 12.0).unwrap();
        let same = oracle_d2(std_normal, std_normal, &b, 2001).unwrap();
        assert!(same.abs() < 1e-9);
        let d = oracle_d2(std_normal, normal(0.0, 2.0), &b, 2001).unwrap();
        assert!((d - (2.0 / 3f64.sqrt()).ln()).abs() < 1e-8, "{d}");
        let narrow = |x: &[f64]| if x[0].abs() < 1.0 { 0.5 } else { 0.0 };
        assert!(matches!(oracle_d2(std_normal, narrow, &b, 201), Err(SgmError::Quadrature(_))));
    }

    #[test]
    fn conditional_norm_cases() {
        let b = Bounds::new(vec![-8.0, -8.0], vec![8.0, 8.0]).unwrap();
        let indep = |x: &[f64]| std_normal(&x[..1]) * std_normal(&x[1..]);
        let q = oracle_conditional_norm(indep, &b, 801).unwrap();
        assert!((q.value - 1.0 / (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);

        // p(y|x) = N(x, 0.25), x uniform on [-1, 1]: inner integral 1/(2σ√π).
        let b = Bounds::new(vec![-2.0, -6.0], vec![2.0, 6.0]).unwrap();
        let lin = |x: &[f64]| if x[0].abs() < 1.0 { 0.5 * normal(x[0], 0.25)(&x[1..]) } else { 0.0 };
        let q = oracle_conditional_norm(lin, &b, 1000).unwrap();
        assert!((q.value - 1.0 / (2.0 * 0.5 * std::f64::consts::PI.sqrt())).abs() < 1e-8, "{}", q.value);
        assert!(q.skipped > 0);
    }

    #[test]
    fn qmc_standard_error_covers() {
        let b = Bounds::cube(3, -8.0, 8.0).unwrap();
        let f = |x: &[f64]| x.iter().map(|&v| std_normal(&[v])).product::<f64>();
        let q = grid_integrate(f, &b, 101).unwrap();
        let se = q.std_error.unwrap();
        assert!((q.value - 1.0).abs() < 5.0 * se + 1e-3, "{} ± {se}", q.value);
    }

    #[test]
    fn independent_joint_has_no_information() {
        let c = GaussianComponent::new(1.0, vec![0.3, -0.2], vec![0.5, 2.0]).unwrap();
        let m = FiniteMixture::single(c).unwrap();
        assert!(cs_qmi(&m, 401).unwrap().abs() < 1e-9);
        assert!(renyi_mi(&m, 401).unwrap().abs() < 1e-9);
    }
}
