//! Post-training metrics: cross-entropy score, validation rate and
//! rank-based detection metrics.

use serde::{Deserialize, Serialize};

use crate::data::MarkovSpec;
use crate::error::{usage, Result, SgmError};
use crate::mixture::FiniteMixture;
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Thresholds on the squared center distance used by [`EvalReport`].
pub const VR_TIGHT: f64 = 1e-4;
pub const VR_LOOSE: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `Ê_data[g] / sqrt(∫ g²)`; greater is better.
    pub ce: f64,
    pub vr_tight: f64,
    pub vr_loose: f64,
    /// `−log ∫ g²` of the model, in nats.
    pub h2: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// `Ê_data[g] / sqrt(∫ g²)` for a model density `g` with known quadratic norm.
pub fn ce_score<T: Scalar>(density: impl Fn(&[T]) -> T, data: &PointSet<T>, quadratic_norm: T) -> Result<T> {
    if !(quadratic_norm > T::zero()) {
        return Err(SgmError::Degenerate(format!("quadratic norm must be > 0, got {quadratic_norm}")));
    }
    if data.is_empty() {
        return usage("empty evaluation data");
    }
    let mean = data.rows().map(&density).sum::<T>() / T::from_usize_lossy(data.len());
    Ok(mean / quadratic_norm.sqrt())
}

/// [`ce_score`] of a finite mixture, using its closed-form norm.
pub fn mixture_ce<T: Scalar>(model: &FiniteMixture<T>, data: &PointSet<T>) -> Result<T> {
    if data.dim() != model.dim() {
        return usage("data dimension does not match the model");
    }
    ce_score(|x| model.density_unchecked(x), data, model.quadratic_norm())
}

/// Weight-weighted fraction of means whose squared distance to the nearest true
/// center is below `d`.
pub fn validation_rate<T: Scalar>(means: &PointSet<T>, weights: &[T], centers: &PointSet<T>, d: T) -> Result<T> {
    if centers.is_empty() {
        return usage("validation rate needs at least one true center");
    }
    if means.len() != weights.len() || means.dim() != centers.dim() {
        return usage("means, weights and centers disagree in size or dimension");
    }
    let mut hit = T::zero();
    let mut total = T::zero();
    for (m, &w) in means.rows().zip(weights) {
        let nearest = centers
            .rows()
            .map(|c| m.iter().zip(c).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>())
            .fold(T::infinity(), T::min);
        total = total + w;
        if nearest < d {
            hit = hit + w;
        }
    }
    if !(total > T::zero()) {
        return Err(SgmError::Degenerate("component weights sum to zero".into()));
    }
    Ok(hit / total)
}

/// [`validation_rate`] over the components of a finite mixture.
pub fn mixture_validation_rate<T: Scalar>(model: &FiniteMixture<T>, centers: &PointSet<T>, d: T) -> Result<T> {
    let mut means = PointSet::with_capacity(model.dim(), model.len());
    let mut weights = Vec::with_capacity(model.len());
    for c in model.components() {
        means.push(c.mean());
        weights.push(c.weight());
    }
    validation_rate(&means, &weights, centers, d)
}

/// Full evaluation of a finite-mixture model.
pub fn evaluate(
    model: &FiniteMixture<f64>,
    data: &PointSet<f64>,
    centers: Option<&PointSet<f64>>,
) -> Result<EvalReport> {
    let ce = mixture_ce(model, data)?;
    let (vr_tight, vr_loose, notes) = match centers {
        Some(c) => (mixture_validation_rate(model, c, VR_TIGHT)?, mixture_validation_rate(model, c, VR_LOOSE)?, vec![]),
        None => (f64::NAN, f64::NAN, vec!["no true centers given; validation rates undefined".to_string()]),
    };
    Ok(EvalReport { ce, vr_tight, vr_loose, h2: model.renyi2_entropy()?, notes })
}

/// `J_{Y|X}` of a conditional model on paired samples:
/// `Ê[g(y|x)] / sqrt(Ê_x ∫ g²(y|x) dy)`, with `cond(x)` returning `g(·|x)` as a
/// finite mixture over `y` at its native scale.
pub fn conditional_ce<F>(mut cond: F, x: &PointSet<f64>, y: &PointSet<f64>) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<FiniteMixture<f64>>,
{
    if x.is_empty() || x.len() != y.len() {
        return usage("conditional evaluation needs a nonempty set of (x, y) pairs");
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (xi, yi) in x.rows().zip(y.rows()) {
        let g = cond(xi)?;
        num += g.eval_density(yi)?;
        den += g.quadratic_norm();
    }
    if !(den > 0.0) {
        return Err(SgmError::Degenerate("conditional model has zero quadratic norm".into()));
    }
    let n = x.len() as f64;
    Ok((num / n) / (den / n).sqrt())
}

/// Fraction of chain states whose conditional `g(·|x)`, probed at the state's
/// center, peaks inside the state the chain most likely moves to. The peak is
/// located on a grid of `grid` points over `[0, 1]`.
pub fn transition_match<F>(mut cond: F, spec: &MarkovSpec, grid: usize) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<FiniteMixture<f64>>,
{
    if grid < 2 {
        return usage("transition probe needs at least two grid points");
    }
    let mut hits = 0usize;
    for s in 0..spec.states() {
        let g = cond(&[spec.centers[s]])?;
        let (mut best, mut best_y) = (f64::NEG_INFINITY, 0.0);
        for i in 0..grid {
            let y = (i as f64 + 0.5) / grid as f64;
            let v = g.eval_density(&[y])?;
            if v > best {
                best = v;
                best_y = y;
            }
        }
        if spec.state_of(best_y) == spec.likely_destination(s) {
            hits += 1;
        }
    }
    Ok(hits as f64 / spec.states() as f64)
}

fn sorted_with_labels(scores_in: &[f64], scores_out: &[f64]) -> Result<Vec<(f64, bool)>> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return usage("both score sets must be nonempty");
    }
    if scores_in.iter().chain(scores_out).any(|s| s.is_nan()) {
        return usage("scores must not be NaN");
    }
    let mut all: Vec<(f64, bool)> =
        scores_in.iter().map(|&s| (s, false)).chain(scores_out.iter().map(|&s| (s, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(all)
}

/// Probability that a random out-sample scores above a random in-sample, ties
/// counting one half.
pub fn auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    let all = sorted_with_labels(scores_in, scores_out)?;
    // Mann-Whitney U with mid-ranks for ties.
    let mut rank_sum_out = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid_rank = (i + j + 1) as f64 / 2.0;
        rank_sum_out += mid_rank * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (n_in, n_out) = (scores_in.len() as f64, scores_out.len() as f64);
    Ok((rank_sum_out - n_out * (n_out + 1.0) / 2.0) / (n_in * n_out))
}

/// False-positive rate on in-samples at the smallest threshold that flags at
/// least 80% of out-samples.
pub fn fpr_at_tpr80(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    sorted_with_labels(scores_in, scores_out)?;
    let mut out = scores_out.to_vec();
    out.sort_by(|a, b| b.total_cmp(a));
    let k = ((0.8 * out.len() as f64).ceil() as usize).clamp(1, out.len());
    let threshold = out[k - 1];
    Ok(scores_in.iter().filter(|&&s| s >= threshold).count() as f64 / scores_in.len() as f64)
}

/// Average precision with out-samples as the positive class.
pub fn auprc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    let mut all = sorted_with_labels(scores_in, scores_out)?;
    all.reverse();
    let n_pos = scores_out.len() as f64;
    let (mut tp, mut fp, mut ap) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut dtp, mut dfp) = (0.0, 0.0);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                dtp += 1.0;
            } else {
                dfp += 1.0;
            }
            j += 1;
        }
        tp += dtp;
        fp += dfp;
        ap += dtp / n_pos * tp / (tp + fp);
        i = j;
    }
    Ok(ap)
}
