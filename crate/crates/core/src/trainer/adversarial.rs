use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{elapsed, gaussian_noise, sample_rows, Mode, Stepper, TrainConfig, TrainReport};
use crate::autodiff::{Frame, Generator, GradTape, RatioNetwork};
use crate::costs::{divergence_tape, BatchTape};
use crate::error::{usage, Result};
use crate::estimators::auroc;
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Generated-batch variance (summed over coordinates) below which the generator
/// is reported as collapsed.
pub const COLLAPSE_VARIANCE: f64 = 1e-6;

/// Discriminator scores on held-out in-distribution and out-of-distribution points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub scores_in: Vec<f64>,
    pub scores_out: Vec<f64>,
    /// Probability that an out-point scores above an in-point.
    pub auroc: f64,
}

pub struct AdversarialOutcome<T> {
    pub generator: Generator<T>,
    pub discriminator: RatioNetwork<T>,
    pub generator_report: TrainReport,
    pub discriminator_report: TrainReport,
    pub probe: Option<ProbeScores>,
    /// Generator steps at which the output variance fell below [`COLLAPSE_VARIANCE`].
    pub collapse_steps: Vec<usize>,
}

/// Alternating min-max on `J_{g,p}`: the discriminator `T` ascends
/// `E_g[T] / sqrt(E_p[T²])` (so `T ∝ g / p`), then the generator descends
/// `E_g[T] / sqrt(ṽ)` with `T` frozen. `cfg.steps` counts generator updates;
/// each is preceded by `cfg.disc_steps` discriminator updates.
pub fn train_adversarial<T: Scalar>(
    cfg: &TrainConfig,
    data: &PointSet<T>,
    probe: Option<(&PointSet<T>, &PointSet<T>)>,
) -> Result<AdversarialOutcome<T>> {
    cfg.validate()?;
    if data.dim() != 2 {
        return usage(format!("adversarial training is limited to 2-D data, got dimension {}", data.dim()));
    }
    if data.is_empty() {
        return usage("training data is empty");
    }
    let start = Instant::now();
    let frame = Frame::from_points(data);
    let noise_dim = cfg.noise_dim.max(data.dim());
    let mut gen = Generator::init(noise_dim, data.dim(), cfg.hidden.clone(), cfg.seed, Some(frame.clone()))?;
    let mut disc = RatioNetwork::init(data.dim(), cfg.hidden.clone(), cfg.seed.wrapping_add(1), Some(frame))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut disc_stepper = Stepper::new(cfg)?;
    let mut gen_stepper = Stepper::new(cfg)?;
    let mut collapse_steps = Vec::new();
    let m = cfg.batch_size;

    for step in 1..=cfg.steps {
        for _ in 0..cfg.disc_steps {
            let fake = gen.generate(&gaussian_noise(&mut rng, m, noise_dim))?;
            let real = sample_rows(&mut rng, data, m);
            let batch = divergence_tape(&disc, &fake, &real)?;
            let grad = disc_stepper.observe(batch)?;
            disc_stepper.apply(disc.params_mut(), &grad, true);
        }

        let z = gaussian_noise(&mut rng, m, noise_dim);
        let real = sample_rows(&mut rng, data, m);
        let mut gt = GradTape::new();
        let g = gt.group(gen.n_params());
        let x = gen.forward_tape(&mut gt, Some(g), &z)?;
        let t = disc.forward_var(&mut gt, None, x);
        let k = gt.tape.mean(t);
        let variance = column_variance(gt.tape.value(x).data(), data.dim());
        if variance < COLLAPSE_VARIANCE {
            warn!("generator step {step}: output variance {variance:.3e} suggests mode collapse");
            collapse_steps.push(step);
        }
        let t_real = disc.eval(&real)?;
        let v_raw = t_real.iter().map(|&t| t * t).sum::<T>() / T::from_usize_lossy(m);
        let grad = gen_stepper.observe(BatchTape::with_constant_normalizer(gt, g, k, v_raw))?;
        gen_stepper.apply(gen.params_mut(), &grad, false);
    }

    let probe = match probe {
        Some((inside, outside)) => {
            let scores_in: Vec<f64> = disc.eval(inside)?.iter().map(|s| s.as_f64()).collect();
            let scores_out: Vec<f64> = disc.eval(outside)?.iter().map(|s| s.as_f64()).collect();
            let auroc = auroc(&scores_in, &scores_out)?;
            Some(ProbeScores { scores_in, scores_out, auroc })
        }
        None => None,
    };
    let secs = elapsed(start);
    Ok(AdversarialOutcome {
        generator: gen,
        discriminator: disc,
        generator_report: gen_stepper.report(Mode::Adversarial, secs),
        discriminator_report: disc_stepper.report(Mode::Ratio, secs),
        probe,
        collapse_steps,
    })
}

/// Sum over coordinates of the per-coordinate sample variance of row-major data.
fn column_variance<T: Scalar>(data: &[T], dim: usize) -> f64 {
    let n = (data.len() / dim) as f64;
    (0..dim)
        .map(|k| {
            let col = data.iter().skip(k).step_by(dim).map(|v| v.as_f64());
            let mean = col.clone().sum::<f64>() / n;
            col.map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .sum()
}
