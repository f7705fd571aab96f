use std::time::Instant;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    elapsed, sample_pairs, sample_rows, uniform_noise, Mode, Stepper, TrainConfig, TrainReport, FREEZE_STREAM,
};
use crate::autodiff::{Frame, ImogArch, ImogNetwork, Tensor};
use crate::costs::{conditional_tape, density_tape, ScanDraw};
use crate::error::{usage, Result};
use crate::mixture::FiniteMixture;
use crate::points::PointSet;
use crate::scalar::Scalar;

fn arch(cfg: &TrainConfig, out_dim: usize) -> ImogArch {
    let mut arch = ImogArch::new(cfg.n_components, out_dim, cfg.hidden.clone(), cfg.seed);
    arch.noise_dim = cfg.noise_dim;
    arch.var_floor = cfg.var_floor;
    arch
}

/// Fits an unconditional infinite mixture to `data` by ascending `J_p`.
pub fn train_density<T: Scalar>(cfg: &TrainConfig, data: &PointSet<T>) -> Result<(ImogNetwork<T>, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return usage("training data is empty");
    }
    let start = Instant::now();
    let mut net = ImogNetwork::init(arch(cfg, data.dim()), Some(Frame::from_points(data)), None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stepper = Stepper::new(cfg)?;
    for step in 1..=cfg.steps {
        let batch = sample_rows(&mut rng, data, cfg.data_batch.unwrap_or(cfg.batch_size));
        let noise = uniform_noise(&mut rng, cfg.batch_size, cfg.noise_dim);
        let stats = density_tape(&net, &batch, &noise)?;
        let grad = stepper.observe(stats)?;
        stepper.apply(net.params_mut(), &grad, true);
        if step % 1000 == 0 {
            debug!("density step {step}: J = {:.6}", stepper.telemetry[step - 1].j);
        }
    }
    Ok((net, stepper.report(Mode::Density, elapsed(start))))
}

/// Fits `g(y | x)` to paired samples by ascending `J_{Y|X}` with two
/// independent uniform scan draws per pair.
pub fn train_conditional<T: Scalar>(
    cfg: &TrainConfig,
    x: &PointSet<T>,
    y: &PointSet<T>,
) -> Result<(ImogNetwork<T>, TrainReport)> {
    cfg.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return usage("conditional training needs a nonempty set of (x, y) pairs");
    }
    let start = Instant::now();
    let arch = arch(cfg, y.dim()).conditional(x.dim());
    let mut net = ImogNetwork::init(arch, Some(Frame::from_points(y)), Some(Frame::from_points(x)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stepper = Stepper::new(cfg)?;
    let m = cfg.batch_size;
    for _ in 0..cfg.steps {
        let (bx, by) = sample_pairs(&mut rng, x, y, m);
        let draw = |rng: &mut ChaCha8Rng| {
            let noise = uniform_noise(rng, m, cfg.noise_dim);
            if cfg.full_scan {
                let n = cfg.n_components;
                let rows = noise.data().chunks(cfg.noise_dim).flat_map(|c| c.repeat(n)).collect();
                ScanDraw {
                    indices: (0..m).flat_map(|_| 0..n).collect(),
                    noise: Tensor::new(m * n, cfg.noise_dim, rows),
                }
            } else {
                ScanDraw { indices: (0..m).map(|_| rng.random_range(0..cfg.n_components)).collect(), noise }
            }
        };
        let d1 = draw(&mut rng);
        let d2 = draw(&mut rng);
        let stats = conditional_tape(&net, &bx, &by, &d1, &d2)?;
        let grad = stepper.observe(stats)?;
        stepper.apply(net.params_mut(), &grad, true);
    }
    Ok((net, stepper.report(Mode::Conditional, elapsed(start))))
}

fn freeze_noise<T: Scalar>(cfg: &TrainConfig) -> crate::autodiff::Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ FREEZE_STREAM);
    uniform_noise(&mut rng, cfg.freeze_draws, cfg.noise_dim)
}

/// The trained model as a finite mixture of `N × M'` scan components.
pub fn freeze_density<T: Scalar>(cfg: &TrainConfig, net: &ImogNetwork<T>) -> Result<FiniteMixture<T>> {
    net.freeze(&freeze_noise(cfg))
}

/// `g(y | x)` as a finite mixture of `N × M'` scan components.
pub fn freeze_conditional<T: Scalar>(cfg: &TrainConfig, net: &ImogNetwork<T>, x: &[T]) -> Result<FiniteMixture<T>> {
    net.freeze_conditional(x, &freeze_noise(cfg))
}
