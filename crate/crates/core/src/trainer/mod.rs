//! Training loops: density, conditional density, probability ratio,
//! adversarial, and the mutual-information pipeline built from them.
//!
//! Every loop follows the same step: draw a minibatch, compute `k'`, `v'` and
//! their gradients, fold them into the bias-corrected filters and move the
//! parameters along the variance-reduced gradient. Runs are deterministic given
//! the config seed and the data.

mod adversarial;
mod config;
mod density;
mod mi;
mod ratio;

pub use adversarial::{train_adversarial, AdversarialOutcome, ProbeScores, COLLAPSE_VARIANCE};
pub use config::{Mode, Optimizer, TrainConfig, TrainReport};
pub use density::{freeze_conditional, freeze_density, train_conditional, train_density};
pub use mi::{mi_pipeline, shuffled_pairs, MiEstimates, MIN_PAIRS};
pub use ratio::train_ratio;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::costs::{AdpFilter, BatchTape, TelemetryRow};
use crate::error::{Result, SgmError};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Seed offset for the noise used when freezing a trained network.
const FREEZE_STREAM: u64 = 0x5eed_f2ee;

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Filters, telemetry and optimizer state shared by all loops.
struct Stepper<T> {
    k_filter: AdpFilter<T>,
    v_filter: AdpFilter<T>,
    telemetry: Vec<TelemetryRow>,
    optimizer: Optimizer,
    lr: T,
    moments: Option<(Vec<T>, Vec<T>)>,
    zero_run: usize,
    patience: usize,
}

impl<T: Scalar> Stepper<T> {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            k_filter: AdpFilter::new(T::of(cfg.beta2))?,
            v_filter: AdpFilter::new(T::of(cfg.beta1))?,
            telemetry: Vec::with_capacity(cfg.steps),
            optimizer: cfg.optimizer,
            lr: T::of(cfg.learning_rate),
            moments: None,
            zero_run: 0,
            patience: cfg.k_zero_patience,
        })
    }

    fn step(&self) -> usize {
        self.telemetry.len() + 1
    }

    fn numerical(&self, reason: impl Into<String>) -> SgmError {
        SgmError::Numerical { step: self.step(), reason: reason.into() }
    }

    /// Folds a batch into the filters, logs telemetry and returns the
    /// variance-reduced ascent direction.
    fn observe(&mut self, batch: BatchTape<T>) -> Result<Vec<T>> {
        let step = self.step();
        let (k_raw, v_raw) = (batch.k_raw(), batch.v_raw());
        if !k_raw.is_finite() || !v_raw.is_finite() {
            return Err(self.numerical(format!("k'={k_raw}, v'={v_raw}")));
        }
        if k_raw > T::zero() {
            self.zero_run = 0;
        } else {
            self.zero_run += 1;
            if self.zero_run >= self.patience {
                return Err(self.numerical(format!(
                    "k' = 0 for {} consecutive steps; the model puts no mass on the data",
                    self.zero_run
                )));
            }
        }
        let k_hat = self.k_filter.update(k_raw)?;
        let v_hat = self.v_filter.update(v_raw)?;
        let grad = batch.variance_reduced_grad(k_hat, v_hat).map_err(|e| self.numerical(e.to_string()))?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.numerical("non-finite gradient"));
        }
        let j = k_hat.as_f64() / v_hat.as_f64().sqrt();
        self.telemetry.push(TelemetryRow {
            step,
            k_raw: k_raw.as_f64(),
            v_raw: v_raw.as_f64(),
            k_hat: k_hat.as_f64(),
            v_hat: v_hat.as_f64(),
            j,
            h2: -2.0 * j.ln(),
        });
        Ok(grad)
    }

    /// Moves `params` along `grad` (`ascend`) or against it.
    fn apply(&mut self, params: &mut [T], grad: &[T], ascend: bool) {
        let sign = if ascend { self.lr } else { -self.lr };
        match self.optimizer {
            Optimizer::Ascent => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p = *p + sign * g;
                }
            }
            Optimizer::Adam => {
                let (m, v) =
                    self.moments.get_or_insert_with(|| (vec![T::zero(); grad.len()], vec![T::zero(); grad.len()]));
                let t = self.telemetry.len().max(1) as i32;
                let (b1, b2) = (T::of(ADAM_B1), T::of(ADAM_B2));
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for i in 0..grad.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * grad[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * grad[i] * grad[i];
                    params[i] = params[i] + sign * (m[i] / c1) / ((v[i] / c2).sqrt() + T::of(ADAM_EPS));
                }
            }
        }
    }

    fn report(self, mode: Mode, wall_clock_secs: f64) -> TrainReport {
        let k_hat = self.k_filter.value().map_or(f64::NAN, |v| v.as_f64());
        let v_hat = self.v_filter.value().map_or(f64::NAN, |v| v.as_f64());
        let j = k_hat / v_hat.sqrt();
        let (h2, d2) = match mode {
            Mode::Density | Mode::Conditional => (Some(-2.0 * j.ln()), None),
            Mode::Ratio | Mode::Adversarial => (None, Some(2.0 * j.ln())),
        };
        TrainReport {
            mode,
            steps: self.telemetry.len(),
            telemetry: self.telemetry,
            k_hat,
            v_hat,
            j,
            h2,
            d2,
            checkpoint: None,
            wall_clock_secs,
        }
    }
}

/// `m` rows drawn uniformly with replacement.
fn sample_rows<T: Scalar>(rng: &mut ChaCha8Rng, data: &PointSet<T>, m: usize) -> PointSet<T> {
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..data.len())).collect();
    data.select(&idx)
}

/// Paired rows drawn with a shared index.
fn sample_pairs<T: Scalar>(
    rng: &mut ChaCha8Rng,
    x: &PointSet<T>,
    y: &PointSet<T>,
    m: usize,
) -> (PointSet<T>, PointSet<T>) {
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..x.len())).collect();
    (x.select(&idx), y.select(&idx))
}

/// Scan noise `c ~ U(0, 1)^cols`.
fn uniform_noise<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| T::of(rng.random::<f64>())).collect())
}

fn gaussian_noise<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    use rand_distr::{Distribution, StandardNormal};
    Tensor::new(rows, cols, (0..rows * cols).map(|_| T::of(StandardNormal.sample(rng))).collect())
}

fn elapsed(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}
