use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{elapsed, sample_rows, Mode, Stepper, TrainConfig, TrainReport};
use crate::autodiff::{Frame, RatioNetwork};
use crate::costs::divergence_tape;
use crate::error::{usage, Result};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Fits a positive network `T ∝ p / q` by ascending `J_{p,q}`.
///
/// The report's `d2` is `2 log(k̂ / sqrt(v̂))`, which approaches `log ∫ p² / q`.
pub fn train_ratio<T: Scalar>(
    cfg: &TrainConfig,
    p: &PointSet<T>,
    q: &PointSet<T>,
) -> Result<(RatioNetwork<T>, TrainReport)> {
    cfg.validate()?;
    if p.is_empty() || q.is_empty() {
        return usage("ratio training needs nonempty p and q samples");
    }
    if p.dim() != q.dim() {
        return usage("p and q samples differ in dimension");
    }
    let start = Instant::now();
    let frame = Frame::from_points(&p.concat(q)?);
    let mut net = RatioNetwork::init(p.dim(), cfg.hidden.clone(), cfg.seed, Some(frame))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stepper = Stepper::new(cfg)?;
    for _ in 0..cfg.steps {
        let bp = sample_rows(&mut rng, p, cfg.batch_size);
        let bq = sample_rows(&mut rng, q, cfg.batch_size);
        let stats = divergence_tape(&net, &bp, &bq)?;
        let grad = stepper.observe(stats)?;
        stepper.apply(net.params_mut(), &grad, true);
    }
    Ok((net, stepper.report(Mode::Ratio, elapsed(start))))
}
