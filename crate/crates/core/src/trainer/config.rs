use serde::{Deserialize, Serialize};

use crate::costs::TelemetryRow;
use crate::error::{usage, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Density,
    Conditional,
    Ratio,
    Adversarial,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Density => "density",
            Mode::Conditional => "conditional",
            Mode::Ratio => "ratio",
            Mode::Adversarial => "adversarial",
        };
        f.write_str(s)
    }
}

/// Parameter update rule applied to the variance-reduced gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `θ ← θ + r g`.
    Ascent,
    /// Adam moments on `g` (bias-corrected, `β = (0.9, 0.999)`).
    #[default]
    Adam,
}

/// Training hyperparameters. Field names double as the config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of one-hot scan indices `N`.
    #[serde(alias = "N")]
    pub n_components: usize,
    /// Minibatch size `M` (also the noise draws per index).
    #[serde(alias = "M")]
    pub batch_size: usize,
    #[serde(alias = "r")]
    pub learning_rate: f64,
    /// Filter rate for `v`.
    pub beta1: f64,
    /// Filter rate for `k`.
    pub beta2: f64,
    pub steps: usize,
    pub var_floor: f64,
    pub seed: u64,
    pub mode: Mode,
    pub hidden: Vec<usize>,
    pub noise_dim: usize,
    pub optimizer: Optimizer,
    /// Data rows per step for the density numerator; `None` ties it to `batch_size`.
    pub data_batch: Option<usize>,
    /// Conditional mode: evaluate every scan index at each pair's noise draw
    /// instead of one sampled index per pair.
    pub full_scan: bool,
    /// Noise draws per index `M'` when freezing a trained model into a finite mixture.
    pub freeze_draws: usize,
    /// Discriminator updates per generator update in adversarial mode.
    pub disc_steps: usize,
    /// Consecutive steps with `k' = 0` tolerated before aborting.
    pub k_zero_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_components: 300,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.99,
            beta2: 0.99,
            steps: 10_000,
            var_floor: crate::mixture::DEFAULT_VAR_FLOOR,
            seed: 0,
            mode: Mode::Density,
            hidden: vec![128, 128],
            noise_dim: 1,
            optimizer: Optimizer::Adam,
            data_batch: None,
            full_scan: true,
            freeze_draws: 100,
            disc_steps: 5,
            k_zero_patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components < 1 {
            return usage("N must be at least 1");
        }
        if self.batch_size < 2 {
            return usage("M must be at least 2");
        }
        if self.data_batch == Some(0) {
            return usage("data batch must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return usage(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return usage(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return usage("var_floor must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return usage("hidden layer widths must be nonempty and positive");
        }
        if self.noise_dim == 0 || self.freeze_draws == 0 || self.disc_steps == 0 || self.k_zero_patience == 0 {
            return usage("noise_dim, freeze_draws, disc_steps and k_zero_patience must be positive");
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub steps: usize,
    #[serde(skip)]
    pub telemetry: Vec<TelemetryRow>,
    pub k_hat: f64,
    pub v_hat: f64,
    /// Filtered objective `k̂ / sqrt(v̂)`.
    pub j: f64,
    /// `−2 log J` in nats (density and conditional modes).
    pub h2: Option<f64>,
    /// `2 log J` in nats (ratio and adversarial modes).
    pub d2: Option<f64>,
    /// Where the trained parameters were written, if anywhere.
    pub checkpoint: Option<String>,
    /// Not serialized so that result files stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}
