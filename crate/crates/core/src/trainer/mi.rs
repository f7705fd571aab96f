use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{freeze_density, train_density, train_ratio, TrainConfig, TrainReport};
use crate::error::{usage, Result};
use crate::mixture::{cs_qmi, FiniteMixture};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Fewest pairs the pipeline accepts.
pub const MIN_PAIRS: usize = 100;
/// Seed offset of the shuffle that builds marginal samples.
const SHUFFLE_STREAM: u64 = 0x5b0f_f1e5;
/// Most pairs used for the plug-in expectations of `Î_Q`.
const IQ_EVAL_MAX: usize = 5_000;

/// Mutual-information estimates in bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimates {
    /// Closed-form quadratic MI of the fitted density model.
    pub qmi_sgm: f64,
    /// Order-2 Renyi MI `log2 ∫ p_xy² / (p_x p_y)` from the ratio network.
    pub renyi_mi_ratio: f64,
    /// `−½ log2(E_{p_x p_y}[r] / E_{p_xy}[r])` with `r = g(x,y) / (g(x) g(y))`.
    pub iq_hat: f64,
    pub density_report: TrainReport,
    pub ratio_report: TrainReport,
}

/// Pairs whose `y_dims` columns come from a seeded permutation of the rows.
/// Marginals are preserved and the dependence between the blocks is destroyed.
pub fn shuffled_pairs<T: Scalar>(xy: &PointSet<T>, y_dims: &[usize], seed: u64) -> Result<PointSet<T>> {
    if y_dims.iter().any(|&k| k >= xy.dim()) {
        return usage("y dimension index out of range");
    }
    let mut perm: Vec<usize> = (0..xy.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = PointSet::with_capacity(xy.dim(), xy.len());
    let mut row = vec![T::zero(); xy.dim()];
    for (r, &p) in perm.iter().enumerate() {
        row.copy_from_slice(xy.row(r));
        let src = xy.row(p);
        for &k in y_dims {
            row[k] = src[k];
        }
        out.push(&row);
    }
    Ok(out)
}

/// Mean of `g(x,y) / (g(x) g(y))` over (at most [`IQ_EVAL_MAX`]) rows.
fn mean_model_ratio(
    joint: &FiniteMixture<f64>,
    gx: &FiniteMixture<f64>,
    gy: &FiniteMixture<f64>,
    pts: &PointSet<f64>,
    x_dims: &[usize],
    y_dims: &[usize],
) -> Result<f64> {
    let n = pts.len().min(IQ_EVAL_MAX);
    let mut sum = 0.0;
    let mut x = Vec::with_capacity(x_dims.len());
    let mut y = Vec::with_capacity(y_dims.len());
    for row in pts.rows().take(n) {
        x.clear();
        y.clear();
        x.extend(x_dims.iter().map(|&k| row[k]));
        y.extend(y_dims.iter().map(|&k| row[k]));
        let denom = gx.eval_density(&x)? * gy.eval_density(&y)?;
        if denom > 0.0 {
            sum += joint.eval_density(row)? / denom;
        }
    }
    Ok(sum / n as f64)
}

/// Density route (closed-form QMI of the fitted model, plus `Î_Q`) and ratio
/// route (Renyi MI from `J_{p,q}` on joint vs shuffled pairs).
pub fn mi_pipeline(cfg: &TrainConfig, xy: &PointSet<f64>, x_dims: &[usize], y_dims: &[usize]) -> Result<MiEstimates> {
    if xy.len() < MIN_PAIRS {
        return usage(format!("mutual information needs at least {MIN_PAIRS} pairs, got {}", xy.len()));
    }
    if xy.dim() < 2 || x_dims.is_empty() || y_dims.is_empty() {
        return usage("mutual information needs paired samples with nonempty x and y blocks");
    }
    let marginal = shuffled_pairs(xy, y_dims, cfg.seed ^ SHUFFLE_STREAM)?;

    let (net, density_report) = train_density(cfg, xy)?;
    let joint = freeze_density(cfg, &net)?.normalize()?;
    let qmi_sgm = cs_qmi(&joint, x_dims, y_dims)?;
    let gx = joint.marginalize(x_dims)?;
    let gy = joint.marginalize(y_dims)?;
    let on_joint = mean_model_ratio(&joint, &gx, &gy, xy, x_dims, y_dims)?;
    let on_product = mean_model_ratio(&joint, &gx, &gy, &marginal, x_dims, y_dims)?;
    let iq_hat = -0.5 * (on_product / on_joint).log2();

    let (_, ratio_report) = train_ratio(cfg, xy, &marginal)?;
    let renyi_mi_ratio = ratio_report.d2.unwrap_or(f64::NAN) / std::f64::consts::LN_2;

    Ok(MiEstimates { qmi_sgm, renyi_mi_ratio, iq_hat, density_report, ratio_report })
}
