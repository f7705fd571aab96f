//! Central finite-difference checks of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgm_core::autodiff::{Frame, Generator, GradTape, ImogArch, ImogNetwork, RatioNetwork, Tensor};
use sgm_core::costs::{conditional_stats, density_stats, divergence_stats, CostBatchStats, ScanDraw};
use sgm_core::points::PointSet;

const H: f64 = 1e-5;

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> PointSet<f64> {
    let data = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    PointSet::new(dim, data).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect())
}

/// Compares every analytic partial with a central difference.
fn check(params: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) {
    assert_eq!(params.len(), grad.len());
    let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + H;
        let up = f(&p);
        p[i] = orig - H;
        let down = f(&p);
        p[i] = orig;
        let fd = (up - down) / (2.0 * H);
        let err = (fd - grad[i]).abs();
        assert!(
            err <= 1e-4 * grad[i].abs().max(fd.abs()) + 1e-7 * scale.max(1e-12),
            "param {i}: analytic {} vs fd {fd}",
            grad[i]
        );
    }
}

fn check_both(params: &[f64], stats: &CostBatchStats<f64>, mut eval: impl FnMut(&[f64]) -> CostBatchStats<f64>) {
    check(params, &stats.k_grad, |p| eval(p).k_raw);
    check(params, &stats.v_grad, |p| eval(p).v_raw);
}

#[test]
fn density_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = uniform_points(&mut rng, 6, 2, 0.2, 0.8);
    let net = ImogNetwork::<f64>::init(ImogArch::new(4, 2, vec![6], 3), Some(Frame::from_points(&data)), None).unwrap();
    let z = noise(&mut rng, 3, 1);
    let stats = density_stats(&net, &data, &z).unwrap();
    assert!(stats.k_raw > 0.0 && stats.v_raw > 0.0);
    let mut probe = net.clone();
    check_both(net.params(), &stats, |p| {
        probe.params_mut().copy_from_slice(p);
        density_stats(&probe, &data, &z).unwrap()
    });
}

#[test]
fn density_objective_gradients_log_domain() {
    // Five output dimensions route the overlap sums through log-sum-exp.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = uniform_points(&mut rng, 5, 5, -1.0, 1.0);
    let net = ImogNetwork::<f64>::init(ImogArch::new(3, 5, vec![5], 4), Some(Frame::from_points(&data)), None).unwrap();
    let z = noise(&mut rng, 2, 1);
    let stats = density_stats(&net, &data, &z).unwrap();
    let mut probe = net.clone();
    check_both(net.params(), &stats, |p| {
        probe.params_mut().copy_from_slice(p);
        density_stats(&probe, &data, &z).unwrap()
    });
}

#[test]
fn conditional_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = uniform_points(&mut rng, 5, 1, 0.0, 1.0);
    let y = uniform_points(&mut rng, 5, 1, 0.0, 1.0);
    let arch = ImogArch::new(4, 1, vec![6], 5).conditional(1);
    let net = ImogNetwork::<f64>::init(arch, Some(Frame::from_points(&y)), Some(Frame::from_points(&x))).unwrap();
    let draw = |rng: &mut ChaCha8Rng| ScanDraw {
        indices: (0..5).map(|_| rng.random_range(0..4)).collect(),
        noise: noise(rng, 5, 1),
    };
    let d1 = draw(&mut rng);
    let d2 = draw(&mut rng);
    let stats = conditional_stats(&net, &x, &y, &d1, &d2).unwrap();
    let mut probe = net.clone();
    check_both(net.params(), &stats, |p| {
        probe.params_mut().copy_from_slice(p);
        conditional_stats(&probe, &x, &y, &d1, &d2).unwrap()
    });
}

#[test]
fn conditional_full_scan_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = uniform_points(&mut rng, 3, 1, 0.0, 1.0);
    let y = uniform_points(&mut rng, 3, 1, 0.0, 1.0);
    let arch = ImogArch::new(4, 1, vec![6], 8).conditional(1);
    let net = ImogNetwork::<f64>::init(arch, Some(Frame::from_points(&y)), Some(Frame::from_points(&x))).unwrap();
    // Every pair sees all four indices, each at its own noise draw.
    let draw = |rng: &mut ChaCha8Rng| ScanDraw { indices: (0..12).map(|r| r % 4).collect(), noise: noise(rng, 12, 1) };
    let d1 = draw(&mut rng);
    let d2 = draw(&mut rng);
    let stats = conditional_stats(&net, &x, &y, &d1, &d2).unwrap();
    let mut probe = net.clone();
    check_both(net.params(), &stats, |p| {
        probe.params_mut().copy_from_slice(p);
        conditional_stats(&probe, &x, &y, &d1, &d2).unwrap()
    });
}

#[test]
fn divergence_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = uniform_points(&mut rng, 7, 2, -1.0, 1.0);
    let q = uniform_points(&mut rng, 9, 2, -0.5, 1.5);
    let net = RatioNetwork::<f64>::init(2, vec![5, 4], 6, Some(Frame::from_points(&q))).unwrap();
    let stats = divergence_stats(&net, &p, &q).unwrap();
    let mut probe = net.clone();
    check_both(net.params(), &stats, |params| {
        probe.params_mut().copy_from_slice(params);
        divergence_stats(&probe, &p, &q).unwrap()
    });
}

#[test]
fn generator_gradients_through_frozen_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let gen = Generator::<f64>::init(2, 2, vec![5], 7, None).unwrap();
    let ratio = RatioNetwork::<f64>::init(2, vec![4], 8, None).unwrap();
    let z = noise(&mut rng, 6, 2);
    let objective = |g: &Generator<f64>| -> (f64, Vec<f64>) {
        let mut gt = GradTape::new();
        let grp = gt.group(g.n_params());
        let x = g.forward_tape(&mut gt, Some(grp), &z).unwrap();
        let t = ratio.forward_var(&mut gt, None, x);
        let out = gt.tape.mean(t);
        (gt.tape.value(out).item(), gt.backward(out, grp).unwrap())
    };
    let (_, grad) = objective(&gen);
    let mut probe = gen.clone();
    check(gen.params(), &grad, |p| {
        probe.params_mut().copy_from_slice(p);
        objective(&probe).0
    });
}
