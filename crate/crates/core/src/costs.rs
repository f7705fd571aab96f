//! Scale-invariant Renyi order-2 objectives and their variance-reduced gradients.
//!
//! All three objectives share one shape, `J = k / sqrt(v)`:
//!
//! | objective   | `k`                         | `v`                              |
//! |-------------|-----------------------------|----------------------------------|
//! | entropy     | `E_p[g(x)]`                 | `∫ g²` (closed form)             |
//! | divergence  | `E_p[T(x)]`                 | `E_q[T²(x)]`                     |
//! | conditional | `E_{p(x,y)}[g(y|x)]`        | `E_{p(x)} ∫ g²(y|x) dy`          |
//!
//! Training follows the batch statistics `k'`, `v'` with bias-corrected moving
//! averages and ascends `∂k'/√ṽ − ½ k̃ ∂v'/ṽ^{3/2}`, where the filtered values
//! enter as constants.

use std::io::Write;

use crate::autodiff::{kernels, GradTape, GroupId, ImogNetwork, RatioNetwork, ScanBatch, Tensor, Var};
use crate::error::{usage, Result, SgmError};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Exponential moving average with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdpFilter<T> {
    ema: T,
    beta: T,
    step: u64,
    first: T,
}

impl<T: Scalar> AdpFilter<T> {
    /// `beta` must lie in `[0, 1)`; `beta = 0` passes the raw stream through.
    pub fn new(beta: T) -> Result<Self> {
        if !(beta >= T::zero() && beta < T::one()) {
            return usage(format!("filter rate must lie in [0, 1), got {beta}"));
        }
        Ok(Self { ema: T::zero(), beta, step: 0, first: T::zero() })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Folds in one raw value and returns the bias-corrected estimate.
    pub fn update(&mut self, raw: T) -> Result<T> {
        if !raw.is_finite() {
            return Err(SgmError::Numerical {
                step: self.step as usize + 1,
                reason: format!("non-finite statistic {raw}"),
            });
        }
        self.ema = self.beta * self.ema + (T::one() - self.beta) * raw;
        self.step += 1;
        if self.step == 1 {
            self.first = raw;
        }
        Ok(self.value().expect("step >= 1"))
    }

    /// Bias-corrected estimate, `None` before the first update.
    pub fn value(&self) -> Option<T> {
        match self.step {
            0 => None,
            // Bias correction cancels the first update exactly.
            1 => Some(self.first),
            s => Some(self.ema / (T::one() - self.beta.powi(s.min(i32::MAX as u64) as i32))),
        }
    }
}

/// Batch statistics of one objective and their parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBatchStats<T> {
    pub k_raw: T,
    pub v_raw: T,
    pub k_grad: Vec<T>,
    pub v_grad: Vec<T>,
}

impl<T: Scalar> CostBatchStats<T> {
    /// `k' / sqrt(v')` of this batch.
    pub fn j(&self) -> T {
        self.k_raw / self.v_raw.sqrt()
    }
}

/// Entropy objective on one batch: all `N × M` scan components against `M` data points.
///
/// `v' = (1/(NM)²) Σ Σ w w' N(m − m', A + A')` and
/// `k' = (1/(N M · B)) Σ Σ w N(m − x, A)` over the `B` data points.
pub fn density_stats<T: Scalar>(
    net: &ImogNetwork<T>,
    data: &PointSet<T>,
    noise: &Tensor<T>,
) -> Result<CostBatchStats<T>> {
    density_tape(net, data, noise)?.into_stats()
}

/// Forward half of [`density_stats`].
pub fn density_tape<T: Scalar>(net: &ImogNetwork<T>, data: &PointSet<T>, noise: &Tensor<T>) -> Result<BatchTape<T>> {
    if net.is_conditional() {
        return usage("density statistics need an unconditional network");
    }
    if data.is_empty() || noise.rows() == 0 {
        return usage("empty data or noise batch");
    }
    if data.dim() != net.arch().out_dim {
        return usage("data dimension does not match the network");
    }
    let mut gt = GradTape::new();
    let g = gt.group(net.n_params());
    let h = net.forward_tape(&mut gt, Some(g), &ScanBatch::grid(net.arch().n_components, noise))?;
    let x = Tensor::new(data.len(), data.dim(), data.as_slice().to_vec());
    let k = kernels::density_mean(&mut gt.tape, h.w, h.m, h.a, &x);
    let v = kernels::self_overlap_mean(&mut gt.tape, h.w, h.m, h.a);
    Ok(BatchTape::new(gt, g, k, v))
}

/// Divergence objective: `k' = mean T(p_batch)`, `v' = mean T²(q_batch)`.
pub fn divergence_stats<T: Scalar>(
    net: &RatioNetwork<T>,
    p_batch: &PointSet<T>,
    q_batch: &PointSet<T>,
) -> Result<CostBatchStats<T>> {
    divergence_tape(net, p_batch, q_batch)?.into_stats()
}

/// Forward half of [`divergence_stats`].
pub fn divergence_tape<T: Scalar>(
    net: &RatioNetwork<T>,
    p_batch: &PointSet<T>,
    q_batch: &PointSet<T>,
) -> Result<BatchTape<T>> {
    if p_batch.is_empty() || q_batch.is_empty() {
        return usage("empty sample batch");
    }
    let mut gt = GradTape::new();
    let g = gt.group(net.n_params());
    let tp = net.forward_tape(&mut gt, Some(g), p_batch)?;
    let k = gt.tape.mean(tp);
    let tq = net.forward_tape(&mut gt, Some(g), q_batch)?;
    let tq2 = gt.tape.square(tq);
    let v = gt.tape.mean(tq2);
    if !(gt.tape.value(v).item() > T::zero()) {
        return Err(SgmError::Degenerate("ratio network is zero on the whole q batch".into()));
    }
    Ok(BatchTape::new(gt, g, k, v))
}

/// One draw of scanning inputs per data pair.
#[derive(Clone, Debug)]
pub struct ScanDraw<T> {
    pub indices: Vec<usize>,
    pub noise: Tensor<T>,
}

/// Conditional objective on pairs `(x_i, y_i)` with two independent scan draws.
///
/// `v' = (1/M) Σ w_i w'_i N(m_i − m'_i, A_i + A'_i)` pairs draw 1 with draw 2 at
/// the same `x_i`; `k'` averages both draws' densities at `y_i`.
///
/// A draw may hold `b` scan rows per pair (rows `i·b .. (i+1)·b` belong to pair
/// `i`). Then `v'` sums all `b²` overlaps within each pair and `k'` averages the
/// `b` rows, which with `b = N` is the full index scan.
pub fn conditional_stats<T: Scalar>(
    net: &ImogNetwork<T>,
    x: &PointSet<T>,
    y: &PointSet<T>,
    draw1: &ScanDraw<T>,
    draw2: &ScanDraw<T>,
) -> Result<CostBatchStats<T>> {
    conditional_tape(net, x, y, draw1, draw2)?.into_stats()
}

/// Forward half of [`conditional_stats`].
pub fn conditional_tape<T: Scalar>(
    net: &ImogNetwork<T>,
    x: &PointSet<T>,
    y: &PointSet<T>,
    draw1: &ScanDraw<T>,
    draw2: &ScanDraw<T>,
) -> Result<BatchTape<T>> {
    if !net.is_conditional() {
        return usage("conditional statistics need a conditional network");
    }
    let m = x.len();
    let rows = draw1.indices.len();
    if m == 0 || y.len() != m || !rows.is_multiple_of(m) || rows == 0 || draw2.indices.len() != rows {
        return usage("scan draws must hold the same whole number of rows per pair");
    }
    let block = rows / m;
    let repeat = |p: &PointSet<T>| {
        let data = p.rows().flat_map(|r| std::iter::repeat_n(r, block).flatten().copied()).collect();
        Tensor::new(rows, p.dim(), data)
    };
    let cond = repeat(x);
    let target = repeat(y);
    let mut gt = GradTape::new();
    let g = gt.group(net.n_params());
    let b1 = ScanBatch { indices: draw1.indices.clone(), noise: draw1.noise.clone(), condition: Some(cond.clone()) };
    let b2 = ScanBatch { indices: draw2.indices.clone(), noise: draw2.noise.clone(), condition: Some(cond) };
    let h1 = net.forward_tape(&mut gt, Some(g), &b1)?;
    let h2 = net.forward_tape(&mut gt, Some(g), &b2)?;
    let v = kernels::block_overlap_mean(&mut gt.tape, block, h1.w, h1.m, h1.a, h2.w, h2.m, h2.a);
    let k1 = kernels::row_density_mean(&mut gt.tape, h1.w, h1.m, h1.a, &target);
    let k2 = kernels::row_density_mean(&mut gt.tape, h2.w, h2.m, h2.a, &target);
    let k = gt.tape.add(k1, k2);
    let k = gt.tape.scale(k, T::of(0.5));
    Ok(BatchTape::new(gt, g, k, v))
}

/// A forward pass with `k'` (and usually `v'`) recorded on a tape, ready for
/// either separate gradients or one combined reverse sweep.
pub struct BatchTape<T> {
    gt: GradTape<T>,
    group: GroupId,
    k: Var,
    v: Option<Var>,
    v_raw: T,
}

impl<T: Scalar> BatchTape<T> {
    fn new(gt: GradTape<T>, group: GroupId, k: Var, v: Var) -> Self {
        let v_raw = gt.tape.value(v).item();
        Self { gt, group, k, v: Some(v), v_raw }
    }

    /// A tape whose normalizer was measured elsewhere and carries no gradient.
    pub fn with_constant_normalizer(gt: GradTape<T>, group: GroupId, k: Var, v_raw: T) -> Self {
        Self { gt, group, k, v: None, v_raw }
    }

    pub fn k_raw(&self) -> T {
        self.gt.tape.value(self.k).item()
    }

    pub fn v_raw(&self) -> T {
        self.v_raw
    }

    pub fn into_stats(self) -> Result<CostBatchStats<T>> {
        let k_grad = self.gt.backward(self.k, self.group)?;
        let v_grad = match self.v {
            Some(v) => self.gt.backward(v, self.group)?,
            None => vec![T::zero(); k_grad.len()],
        };
        Ok(CostBatchStats { k_raw: self.k_raw(), v_raw: self.v_raw, k_grad, v_grad })
    }

    /// Gradient of `a k' − b v'` in a single reverse sweep.
    pub fn combined_grad(mut self, a: T, b: T) -> Result<Vec<T>> {
        let tape = &mut self.gt.tape;
        let out = match self.v {
            Some(v) => {
                let ka = tape.scale(self.k, a);
                let vb = tape.scale(v, b);
                tape.sub(ka, vb)
            }
            None => tape.scale(self.k, a),
        };
        self.gt.backward(out, self.group)
    }

    /// Variance-reduced ascent direction for the given filtered statistics.
    pub fn variance_reduced_grad(self, k_filtered: T, v_filtered: T) -> Result<Vec<T>> {
        let (a, b) = variance_reduced_coefficients(k_filtered, v_filtered)?;
        self.combined_grad(a, b)
    }
}

/// `(1 / sqrt(ṽ), ½ k̃ / ṽ^{3/2})`.
pub fn variance_reduced_coefficients<T: Scalar>(k_filtered: T, v_filtered: T) -> Result<(T, T)> {
    if !(v_filtered > T::zero()) {
        return Err(SgmError::Degenerate(format!("filtered normalizer must be > 0, got {v_filtered}")));
    }
    Ok((T::one() / v_filtered.sqrt(), T::of(0.5) * k_filtered / (v_filtered * v_filtered.sqrt())))
}

/// `k_grad / sqrt(ṽ) − ½ k̃ v_grad / ṽ^{3/2}`.
pub fn variance_reduced_grad<T: Scalar>(stats: &CostBatchStats<T>, k_filtered: T, v_filtered: T) -> Result<Vec<T>> {
    let (a, b) = variance_reduced_coefficients(k_filtered, v_filtered)?;
    Ok(stats.k_grad.iter().zip(&stats.v_grad).map(|(&gk, &gv)| a * gk - b * gv).collect())
}

/// `−2 log(k / sqrt(v))`, in nats.
pub fn h2_estimate<T: Scalar>(k: T, v: T) -> Result<T> {
    if !(k > T::zero() && v > T::zero()) {
        return usage(format!("entropy readout needs k > 0 and v > 0, got k={k}, v={v}"));
    }
    Ok(-T::of(2.0) * (k / v.sqrt()).ln())
}

/// One telemetry line.
#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryRow {
    pub step: usize,
    pub k_raw: f64,
    pub v_raw: f64,
    pub k_hat: f64,
    pub v_hat: f64,
    pub j: f64,
    /// `−2 log(k̂ / sqrt(v̂))`.
    pub h2: f64,
}

pub const TELEMETRY_HEADER: &str = "step,k_raw,v_raw,k_hat,v_hat,J,H2_estimate";

impl TelemetryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.step, self.k_raw, self.v_raw, self.k_hat, self.v_hat, self.j, self.h2
        )
    }
}

pub fn write_telemetry<W: Write>(mut w: W, rows: &[TelemetryRow]) -> Result<()> {
    writeln!(w, "{TELEMETRY_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn filter_first_step_is_raw() {
        let mut f = AdpFilter::new(0.9).unwrap();
        assert_eq!(f.value(), None);
        assert_eq!(f.update(3.25).unwrap(), 3.25);
    }

    #[test]
    fn filter_constant_stream() {
        let mut f = AdpFilter::new(0.99).unwrap();
        for _ in 0..500 {
            assert_relative_eq!(f.update(0.7).unwrap(), 0.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn filter_two_step_recurrence() {
        let mut f = AdpFilter::new(0.9).unwrap();
        f.update(1.0).unwrap();
        let out = f.update(2.0).unwrap();
        assert_relative_eq!(out, 0.29 / 0.19, max_relative = 1e-14);
        assert_relative_eq!(out, 1.5263, epsilon = 1e-4);
    }

    #[test]
    fn filter_zero_beta_passes_through() {
        let mut f = AdpFilter::new(0.0).unwrap();
        for r in [1.0, 5.0, -2.0, 0.125] {
            assert_eq!(f.update(r).unwrap(), r);
        }
    }

    #[test]
    fn filter_rejects_bad_input() {
        assert!(AdpFilter::new(1.0f64).is_err());
        assert!(AdpFilter::new(-0.1f64).is_err());
        let mut f = AdpFilter::new(0.5).unwrap();
        assert!(matches!(f.update(f64::NAN), Err(SgmError::Numerical { step: 1, .. })));
    }

    fn stats(kg: Vec<f64>, vg: Vec<f64>) -> CostBatchStats<f64> {
        CostBatchStats { k_raw: 1.0, v_raw: 1.0, k_grad: kg, v_grad: vg }
    }

    #[test]
    fn vr_grad_zero_and_linearity() {
        let z = variance_reduced_grad(&stats(vec![0.0; 3], vec![0.0; 3]), 0.4, 0.9).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        let s = stats(vec![1.0, -2.0], vec![0.5, 3.0]);
        let v = 0.64;
        let g1 = variance_reduced_grad(&s, 0.3, v).unwrap();
        let g2 = variance_reduced_grad(&s, 0.6, v).unwrap();
        let first = |i: usize| s.k_grad[i] / v.sqrt();
        for i in 0..2 {
            assert_relative_eq!(g2[i] - first(i), 2.0 * (g1[i] - first(i)), max_relative = 1e-12);
        }
        assert!(variance_reduced_grad(&s, 0.3, 0.0).is_err());
    }

    #[test]
    fn h2_readouts() {
        let q = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(h2_estimate(q, q).unwrap(), (2.0 * std::f64::consts::PI.sqrt()).ln(), max_relative = 1e-14);
        assert_eq!(h2_estimate(2.0, 4.0).unwrap(), 0.0);
        assert!(h2_estimate(0.0, 1.0).is_err());
        assert!(h2_estimate(1.0, -1.0).is_err());
    }

    #[test]
    fn telemetry_format() {
        let row = TelemetryRow { step: 3, k_raw: 0.1, v_raw: 0.2, k_hat: 0.3, v_hat: 0.4, j: 0.5, h2: 1.0 };
        let mut buf = Vec::new();
        write_telemetry(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TELEMETRY_HEADER);
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[0], "3");
        assert_eq!(fields[1], "1.0000000000000001e-1");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.1);
    }
}
