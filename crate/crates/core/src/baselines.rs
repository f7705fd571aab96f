//! Diagonal-covariance EM mixture baseline and its closed-form conditional.

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result, SgmError};
use crate::mixture::{validate_dims, FiniteMixture, GaussianComponent};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Expected count below which a component is treated as collapsed.
pub const EMPTY_COMPONENT: f64 = 1e-8;

/// Settings for [`em_fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Component count `K`.
    pub k: usize,
    pub iters: usize,
    pub seed: u64,
    pub var_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { k: 20, iters: 200, seed: 0, var_floor: 1e-6 }
    }
}

/// A fitted mixture plus its training trace.
#[derive(Clone, Debug)]
pub struct EmFit<T> {
    pub mixture: FiniteMixture<T>,
    /// Average log-likelihood before each iteration and after the last one.
    pub log_likelihood: Vec<T>,
    /// Iterations at which a collapsed component was re-seeded.
    pub reinitialized: Vec<usize>,
}

struct Params<T> {
    w: Vec<T>,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Params<T> {
    /// `ln w_k - ½ Σ ln(2π v_kd)` per component.
    fn log_consts(&self, k: usize, d: usize) -> Vec<T> {
        let two_pi = T::PI() + T::PI();
        (0..k)
            .map(|j| {
                let s: T = self.v[j * d..(j + 1) * d].iter().map(|&v| (two_pi * v).ln()).sum();
                self.w[j].ln() - T::of(0.5) * s
            })
            .collect()
    }
}

fn column_moments<T: Scalar>(data: &PointSet<T>) -> (Vec<T>, Vec<T>) {
    let d = data.dim();
    let n = T::from_usize_lossy(data.len());
    let mean = data.mean();
    let mut var = vec![T::zero(); d];
    for row in data.rows() {
        for k in 0..d {
            let e = row[k] - mean[k];
            var[k] = var[k] + e * e;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / n);
    (mean, var)
}

/// Standard EM for a `k`-component diagonal Gaussian mixture. Means start at
/// distinct random data points, variances at the data variance, weights uniform.
/// A component whose expected count drops below [`EMPTY_COMPONENT`] is moved to
/// a random datum (logged); otherwise the average log-likelihood never decreases.
pub fn em_fit<T: Scalar>(data: &PointSet<T>, cfg: &EmConfig) -> Result<EmFit<T>> {
    let (n, d, k) = (data.len(), data.dim(), cfg.k);
    if k == 0 {
        return usage("EM needs at least one component");
    }
    if n < k {
        return usage(format!("EM needs at least K = {k} points, got {n}"));
    }
    if !(cfg.var_floor > 0.0) {
        return usage("variance floor must be positive");
    }
    let floor = T::of(cfg.var_floor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, data_var) = column_moments(data);
    let data_var: Vec<T> = data_var.into_iter().map(|v| v.max(floor)).collect();

    let mut p = Params {
        w: vec![T::one() / T::from_usize_lossy(k); k],
        m: Vec::with_capacity(k * d),
        v: Vec::with_capacity(k * d),
    };
    for i in index::sample(&mut rng, n, k) {
        p.m.extend_from_slice(data.row(i));
        p.v.extend_from_slice(&data_var);
    }

    let half = T::of(0.5);
    let mut resp = vec![T::zero(); n * k];
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    let mut reinitialized = Vec::new();
    for iter in 0..=cfg.iters {
        // E-step.
        let consts = p.log_consts(k, d);
        let inv_v: Vec<T> = p.v.iter().map(|&v| T::one() / v).collect();
        let mut ll = T::zero();
        for (i, x) in data.rows().enumerate() {
            let r = &mut resp[i * k..(i + 1) * k];
            let mut max = T::neg_infinity();
            for j in 0..k {
                let mut quad = T::zero();
                for c in 0..d {
                    let e = x[c] - p.m[j * d + c];
                    quad = quad + e * e * inv_v[j * d + c];
                }
                r[j] = consts[j] - half * quad;
                max = max.max(r[j]);
            }
            let mut sum = T::zero();
            for v in r.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            r.iter_mut().for_each(|v| *v = *v / sum);
            ll = ll + max + sum.ln();
        }
        let ll = ll / T::from_usize_lossy(n);
        if !ll.is_finite() {
            return Err(SgmError::Numerical { step: iter, reason: format!("EM log-likelihood is {ll}") });
        }
        trace.push(ll);
        if iter == cfg.iters {
            break;
        }

        // M-step.
        let mut counts = vec![T::zero(); k];
        let mut sums = vec![T::zero(); k * d];
        for (i, x) in data.rows().enumerate() {
            for j in 0..k {
                let r = resp[i * k + j];
                counts[j] = counts[j] + r;
                for c in 0..d {
                    sums[j * d + c] = sums[j * d + c] + r * x[c];
                }
            }
        }
        let mut collapsed = vec![false; k];
        for j in 0..k {
            if counts[j].as_f64() < EMPTY_COMPONENT {
                collapsed[j] = true;
                continue;
            }
            for c in 0..d {
                p.m[j * d + c] = sums[j * d + c] / counts[j];
            }
        }
        let mut sq = vec![T::zero(); k * d];
        for (i, x) in data.rows().enumerate() {
            for j in 0..k {
                let r = resp[i * k + j];
                for c in 0..d {
                    let e = x[c] - p.m[j * d + c];
                    sq[j * d + c] = sq[j * d + c] + r * e * e;
                }
            }
        }
        let total = T::from_usize_lossy(n);
        for j in 0..k {
            if collapsed[j] {
                let pick = rng.random_range(0..n);
                warn!("EM iteration {iter}: component {j} collapsed, re-seeded at datum {pick}");
                p.m[j * d..(j + 1) * d].copy_from_slice(data.row(pick));
                p.v[j * d..(j + 1) * d].copy_from_slice(&data_var);
                p.w[j] = T::one() / total;
                reinitialized.push(iter);
                continue;
            }
            p.w[j] = counts[j] / total;
            for c in 0..d {
                p.v[j * d + c] = (sq[j * d + c] / counts[j]).max(floor);
            }
        }
        let mass: T = p.w.iter().copied().sum();
        p.w.iter_mut().for_each(|w| *w = *w / mass);
    }

    let comps = (0..k)
        .map(|j| GaussianComponent::new(p.w[j], p.m[j * d..(j + 1) * d].to_vec(), p.v[j * d..(j + 1) * d].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmFit { mixture: FiniteMixture::new(comps)?, log_likelihood: trace, reinitialized })
}

/// `g(y|x)` of a diagonal mixture: the `y` marginals of every component,
/// weighted by its responsibility for `x`. Weights sum to one. If every
/// responsibility underflows, the component nearest to `x` (in standardized
/// distance) takes all the weight and a warning is logged.
pub fn gmm_conditional<T: Scalar>(
    m: &FiniteMixture<T>,
    x: &[T],
    x_dims: &[usize],
    y_dims: &[usize],
) -> Result<FiniteMixture<T>> {
    validate_dims(x_dims, m.dim())?;
    validate_dims(y_dims, m.dim())?;
    if x_dims.iter().any(|k| y_dims.contains(k)) {
        return usage("x and y index sets overlap");
    }
    if x.len() != x_dims.len() {
        return usage(format!("conditioning point has {} coordinates, expected {}", x.len(), x_dims.len()));
    }
    let two_pi = T::PI() + T::PI();
    let half = T::of(0.5);
    let comps = m.components();
    let mut logs = Vec::with_capacity(comps.len());
    let mut dists = Vec::with_capacity(comps.len());
    for c in comps {
        let mut quad = T::zero();
        let mut norm = T::zero();
        let mut dist = T::zero();
        for (&xi, &k) in x.iter().zip(x_dims) {
            let e = xi - c.mean()[k];
            quad = quad + e * e / c.var_diag()[k];
            norm = norm + (two_pi * c.var_diag()[k]).ln();
            dist = dist + e.abs() / c.var_diag()[k].sqrt();
        }
        logs.push(c.weight().ln() - half * (quad + norm));
        dists.push(dist);
    }
    let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut resp: Vec<T> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = resp.iter().copied().sum();
    if max.is_finite() && sum > T::zero() && sum.is_finite() {
        resp.iter_mut().for_each(|r| *r = *r / sum);
    } else {
        let nearest = (0..comps.len())
            .filter(|&j| comps[j].weight() > T::zero())
            .min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap_or(std::cmp::Ordering::Equal))
            .ok_or_else(|| SgmError::Degenerate("mixture has no weighted component".into()))?;
        warn!("all responsibilities underflowed at x = {x:?}; using nearest component {nearest}");
        resp.iter_mut().enumerate().for_each(|(j, r)| *r = if j == nearest { T::one() } else { T::zero() });
    }
    FiniteMixture::new(comps.iter().zip(resp).map(|(c, r)| c.restrict(y_dims).with_weight(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cfg(k: usize, iters: usize, seed: u64) -> EmConfig {
        EmConfig { k, iters, seed, ..Default::default() }
    }

    #[test]
    fn single_component_matches_moments() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1, (i as f64).sin()]).collect();
        let data = PointSet::from_rows(&rows).unwrap();
        let fit = em_fit(&data, &cfg(1, 3, 0)).unwrap();
        let c = &fit.mixture.components()[0];
        let (mean, var) = column_moments(&data);
        for k in 0..2 {
            assert!((c.mean()[k] - mean[k]).abs() < 1e-12);
            assert!((c.var_diag()[k] - var[k]).abs() < 1e-12);
        }
        assert!((c.weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut data = PointSet::with_capacity(2, 2000);
        for i in 0..2000 {
            let c = if i % 2 == 0 { [0.0, 0.0] } else { [3.0, 1.0] };
            data.push(&[c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
        }
        let fit = em_fit(&data, &cfg(2, 50, 1)).unwrap();
        let mut means: Vec<Vec<f64>> = fit.mixture.components().iter().map(|c| c.mean().to_vec()).collect();
        means.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!(means[0][0].abs() < 0.01 && means[0][1].abs() < 0.01, "{means:?}");
        assert!((means[1][0] - 3.0).abs() < 0.01 && (means[1][1] - 1.0).abs() < 0.01, "{means:?}");
    }

    #[test]
    fn log_likelihood_is_monotone() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows: Vec<Vec<f64>> =
                (0..300).map(|_| vec![rng.random::<f64>().powi(2), rng.random::<f64>()]).collect();
            let data = PointSet::from_rows(&rows).unwrap();
            let fit = em_fit(&data, &cfg(4, 30, seed)).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let data = PointSet::from_rows(&rows).unwrap();
        let a = em_fit(&data, &cfg(3, 10, 9)).unwrap();
        let b = em_fit(&data, &cfg(3, 10, 9)).unwrap();
        assert_eq!(a.mixture, b.mixture);
    }

    #[test]
    fn rejects_too_few_points() {
        let data = PointSet::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(em_fit(&data, &cfg(3, 5, 0)), Err(SgmError::Usage(_))));
    }

    fn two_by_two() -> FiniteMixture<f64> {
        FiniteMixture::new(vec![
            GaussianComponent::new(0.4, vec![0.0, 1.0], vec![0.1, 0.2]).unwrap(),
            GaussianComponent::new(0.6, vec![5.0, -1.0], vec![0.3, 0.5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn conditional_of_single_component_is_marginal() {
        let c = GaussianComponent::new(2.0, vec![0.5, -1.0], vec![0.2, 0.7]).unwrap();
        let m = FiniteMixture::single(c.clone()).unwrap();
        let g = gmm_conditional(&m, &[3.0], &[0], &[1]).unwrap();
        assert_eq!(g.components()[0], c.restrict(&[1]).with_weight(1.0));
    }

    #[test]
    fn responsibilities_sum_to_one_and_saturate() {
        let m = two_by_two();
        for x in [-1.0, 0.3, 2.5, 4.0, 7.0] {
            let g = gmm_conditional(&m, &[x], &[0], &[1]).unwrap();
            assert!((g.total_mass() - 1.0).abs() < 1e-12);
        }
        let g = gmm_conditional(&m, &[5.0], &[0], &[1]).unwrap();
        assert!(g.components()[1].weight() > 1.0 - 1e-12);
    }

    #[test]
    fn underflow_falls_back_to_nearest() {
        let m = two_by_two();
        let g = gmm_conditional(&m, &[1e200], &[0], &[1]).unwrap();
        assert_eq!(g.components()[1].weight(), 1.0);
        assert_eq!(g.components()[0].weight(), 0.0);
    }
}
