//! Acceptance criteria AC1 to AC10.
//!
//! Runs without the libtest harness so every criterion prints exactly one
//! `PASS` or `FAIL` line. Exits nonzero when any criterion fails. Criterion
//! names given as arguments (`AC3 AC8`) select a subset.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sgm_core::autodiff::{kernels, Frame, GradTape, ImogArch, ImogNetwork, RatioNetwork, ScanBatch, Tensor};
use sgm_core::baselines::{em_fit, gmm_conditional, EmConfig};
use sgm_core::costs::{conditional_stats, density_stats, divergence_stats, CostBatchStats, ScanDraw, TelemetryRow};
use sgm_core::data::{
    gen_generalized, gen_markov, gen_mog, ring, two_moons, GENERALIZED_SAMPLES, MARKOV_STATES, N_CENTERS,
};
use sgm_core::estimators::{conditional_ce, mixture_ce, mixture_validation_rate, transition_match, VR_LOOSE, VR_TIGHT};
use sgm_core::mixture::{cross_inner, cs_qmi, FiniteMixture, GaussianComponent};
use sgm_core::oracle;
use sgm_core::points::PointSet;
use sgm_core::trainer::{
    freeze_conditional, freeze_density, mi_pipeline, shuffled_pairs, train_adversarial, train_conditional,
    train_density, TrainConfig,
};

type Outcome = (bool, String);
type Criterion = (&'static str, &'static str, fn(&mut Shared) -> Outcome);
/// `(weight, mean, variance)` of each 1-D component.
type Parts = Vec<(f64, f64, f64)>;

/// A training run whose filtered `J` is checked against the true supremum.
struct BoundedRun {
    label: String,
    sup: f64,
    /// Standard error of `J` at the optimum from the finite data set.
    data_se: f64,
    beta: f64,
    telemetry: Vec<TelemetryRow>,
}

/// Delta-method standard error of `mean(a) / sqrt(mean(b))`. With `paired`
/// the two samples come from the same rows and their covariance is used.
fn ratio_se(a: &[f64], b: &[f64], paired: bool) -> f64 {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (k, v) = (mean(a), mean(b));
    let cov = |s: &[f64], ms: f64, t: &[f64], mt: f64| {
        s.iter().zip(t).map(|(x, y)| (x - ms) * (y - mt)).sum::<f64>() / (s.len() - 1) as f64
    };
    let (ga, gb) = (1.0 / v.sqrt(), -k / (2.0 * v.powf(1.5)));
    let mut var = ga * ga * cov(a, k, a, k) / a.len() as f64 + gb * gb * cov(b, v, b, v) / b.len() as f64;
    if paired {
        var += 2.0 * ga * gb * cov(a, k, b, v) / a.len() as f64;
    }
    var.max(0.0).sqrt()
}

fn density_run(
    label: String,
    mix: &FiniteMixture<f64>,
    data: &PointSet<f64>,
    beta: f64,
    telemetry: Vec<TelemetryRow>,
) -> BoundedRun {
    let mix = mix.normalize().unwrap();
    let a: Vec<f64> = data.rows().map(|x| mix.eval_density(x).unwrap()).collect();
    let norm = mix.quadratic_norm();
    BoundedRun { label, sup: norm.sqrt(), data_se: ratio_se(&a, &[norm, norm], false), beta, telemetry }
}

#[derive(Default)]
struct Shared {
    runs: Vec<BoundedRun>,
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let selected = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    // AC4 reads the runs recorded by AC3, AC5 and AC8.
    let needs_runs = selected("AC4");

    let criteria: [Criterion; 10] = [
        ("AC1", "closed forms match grid quadrature", ac1),
        ("AC2", "analytic gradients match finite differences", ac2),
        ("AC3", "entropy recovery on 1-D data", ac3),
        ("AC5", "MI estimates finite, QMI accurate at 5k samples", ac5),
        ("AC6", "J invariant to weight scaling", ac6),
        ("AC7", "generalized-mixture ordering against EM", ac7),
        ("AC8", "Markov conditional ordering against EM", ac8),
        ("AC4", "filtered J never exceeds the supremum by 3 SE", ac4),
        ("AC9", "discriminator OOD AUROC on moons vs ring", ac9),
        ("AC10", "CLI runs are byte-identical when repeated", ac10),
    ];
    let mut shared = Shared::default();
    let mut results = BTreeMap::new();
    for (id, title, run) in criteria {
        let feeds_ac4 = needs_runs && matches!(id, "AC3" | "AC5" | "AC8");
        if !selected(id) && !feeds_ac4 {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        eprintln!("{id} finished in {secs:.0}s");
        if selected(id) {
            let n: usize = id[2..].parse().unwrap();
            results.insert(n, format!("{id} {}: {title}: {detail}", if pass { "PASS" } else { "FAIL" }));
        }
    }
    let mut failed = 0;
    for line in results.values() {
        println!("{line}");
        if line.contains(" FAIL: ") {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Relative error for log-scale quantities, absolute below magnitude 1.
fn log_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_mixture(rng: &mut ChaCha8Rng, dim: usize) -> FiniteMixture<f64> {
    let k = rng.random_range(1..=5);
    let comps = (0..k)
        .map(|_| {
            let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let var = (0..dim).map(|_| rng.random_range(0.02..0.8)).collect();
            GaussianComponent::new(rng.random_range(0.2..2.0), mean, var).unwrap()
        })
        .collect();
    FiniteMixture::new(comps).unwrap()
}

fn ac1(_: &mut Shared) -> Outcome {
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(0xac1);
    let mut worst =
        BTreeMap::from([("quadratic_norm", 0.0f64), ("cross_inner", 0.0), ("renyi2_entropy", 0.0), ("cs_qmi", 0.0)]);
    let mut count = 0;
    let mut bump = |k: &'static str, e: f64| {
        let w = worst.get_mut(k).unwrap();
        *w = w.max(if e.is_finite() { e } else { f64::INFINITY });
    };
    for (dim, res) in [(1usize, 4001usize), (2, 801)] {
        for _ in 0..12 {
            let p = random_mixture(&mut rng, dim).normalize().unwrap();
            let q = random_mixture(&mut rng, dim).normalize().unwrap();
            let qn = oracle::quadratic_norm(&p, res).map(|o| o.value).unwrap_or(f64::NAN);
            bump("quadratic_norm", rel_err(p.quadratic_norm(), qn));
            let ci = oracle::cross_inner(&p, &q, res).map(|o| o.value).unwrap_or(f64::NAN);
            bump("cross_inner", rel_err(cross_inner(&p, &q).unwrap(), ci));
            let h2 = oracle::renyi2_entropy(&p, res).unwrap_or(f64::NAN);
            bump("renyi2_entropy", log_err(p.renyi2_entropy().unwrap(), h2));
            if dim == 2 {
                let qmi = oracle::cs_qmi(&p, res).unwrap_or(f64::NAN);
                bump("cs_qmi", log_err(cs_qmi(&p, &[0], &[1]).unwrap(), qmi));
            }
            count += 1;
        }
    }
    let pass = worst.values().all(|&e| e < TOL);
    let detail = worst.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect::<Vec<_>>().join(", ");
    (pass, format!("{count} mixtures, worst relative error {detail} (tolerance {TOL:.0e})"))
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// Largest relative disagreement between analytic and central-difference partials.
fn fd_error(params: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p);
        p[i] = orig - FD_STEP;
        let down = f(&p);
        p[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        // Partials that vanish next to the largest one are compared on its scale.
        let denom = grad[i].abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max((fd - grad[i]).abs() / denom);
    }
    worst
}

fn stats_error(
    params: &[f64],
    stats: &CostBatchStats<f64>,
    mut eval: impl FnMut(&[f64]) -> CostBatchStats<f64>,
) -> f64 {
    let k = fd_error(params, &stats.k_grad, |p| eval(p).k_raw);
    let v = fd_error(params, &stats.v_grad, |p| eval(p).v_raw);
    k.max(v)
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointSet<f64> {
    PointSet::new(dim, (0..n * dim).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn uniform_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random::<f64>()).collect())
}

fn ac2(_: &mut Shared) -> Outcome {
    const NETS: u64 = 5;
    let mut worst = BTreeMap::from([
        ("density", 0.0f64),
        ("divergence", 0.0),
        ("conditional", 0.0),
        ("conditional full scan", 0.0),
    ]);
    for seed in 0..NETS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xac2 + seed);
        let dim = 1 + seed as usize % 3;
        let data = uniform_points(&mut rng, 6, dim);
        let net = ImogNetwork::<f64>::init(ImogArch::new(3, dim, vec![5], seed), Some(Frame::from_points(&data)), None)
            .unwrap();
        let z = uniform_tensor(&mut rng, 3, 1);
        let stats = density_stats(&net, &data, &z).unwrap();
        let mut probe = net.clone();
        let e = stats_error(net.params(), &stats, |p| {
            probe.params_mut().copy_from_slice(p);
            density_stats(&probe, &data, &z).unwrap()
        });
        *worst.get_mut("density").unwrap() = worst["density"].max(e);

        let q = uniform_points(&mut rng, 7, dim);
        let ratio = RatioNetwork::<f64>::init(dim, vec![5, 4], seed, Some(Frame::from_points(&q))).unwrap();
        let stats = divergence_stats(&ratio, &data, &q).unwrap();
        let mut probe = ratio.clone();
        let e = stats_error(ratio.params(), &stats, |p| {
            probe.params_mut().copy_from_slice(p);
            divergence_stats(&probe, &data, &q).unwrap()
        });
        *worst.get_mut("divergence").unwrap() = worst["divergence"].max(e);

        let (pairs, n) = (5usize, 3usize);
        let x = uniform_points(&mut rng, pairs, 1);
        let y = uniform_points(&mut rng, pairs, 1);
        let arch = ImogArch::new(n, 1, vec![5], seed).conditional(1);
        let cnet = ImogNetwork::<f64>::init(arch, Some(Frame::from_points(&y)), Some(Frame::from_points(&x))).unwrap();
        for (key, block) in [("conditional", 1usize), ("conditional full scan", n)] {
            let mut draw = || {
                let indices =
                    (0..pairs * block).map(|r| if block == 1 { rng.random_range(0..n) } else { r % n }).collect();
                ScanDraw { indices, noise: uniform_tensor(&mut rng, pairs * block, 1) }
            };
            let (d1, d2) = (draw(), draw());
            let stats = conditional_stats(&cnet, &x, &y, &d1, &d2).unwrap();
            let mut probe = cnet.clone();
            let e = stats_error(cnet.params(), &stats, |p| {
                probe.params_mut().copy_from_slice(p);
                conditional_stats(&probe, &x, &y, &d1, &d2).unwrap()
            });
            *worst.get_mut(key).unwrap() = worst[key].max(e);
        }
    }
    let pass = worst.values().all(|&e| e < FD_TOL);
    let detail = worst.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect::<Vec<_>>().join(", ");
    (pass, format!("{NETS} random nets per path, worst relative error {detail} (tolerance {FD_TOL:.0e})"))
}

fn sample_mixture_1d(rng: &mut ChaCha8Rng, parts: &[(f64, f64, f64)], n: usize) -> PointSet<f64> {
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let data = (0..n)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let &(_, mean, var) = parts
                .iter()
                .find(|p| {
                    u -= p.0;
                    u < 0.0
                })
                .unwrap_or(parts.last().unwrap());
            let z: f64 = StandardNormal.sample(rng);
            mean + var.sqrt() * z
        })
        .collect();
    PointSet::new(1, data).unwrap()
}

fn ac3(shared: &mut Shared) -> Outcome {
    const SAMPLES: usize = 100_000;
    const TOL: f64 = 0.05;
    let cases: [(&str, Parts); 2] =
        [("N(0,1)", vec![(1.0, 0.0, 1.0)]), ("0.3 N(-2,0.25) + 0.7 N(1,1)", vec![(0.3, -2.0, 0.25), (0.7, 1.0, 1.0)])];
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, (name, parts)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xac3 + i as u64);
        let data = sample_mixture_1d(&mut rng, parts, SAMPLES);
        let truth = FiniteMixture::new(
            parts.iter().map(|&(w, m, v)| GaussianComponent::new(w, vec![m], vec![v]).unwrap()).collect(),
        )
        .unwrap();
        let h2_true = truth.renyi2_entropy().unwrap();
        let cfg = TrainConfig {
            n_components: 16,
            batch_size: 16,
            data_batch: Some(256),
            learning_rate: 1e-3,
            steps: 3_000,
            hidden: vec![32, 32],
            seed: i as u64 + 1,
            ..TrainConfig::default()
        };
        let (_, report) = train_density(&cfg, &data).unwrap();
        let h2 = report.h2.unwrap_or(f64::NAN);
        let ok = (h2 - h2_true).abs() <= TOL;
        pass &= ok;
        notes.push(format!("{name}: H2 {h2:.4} vs {h2_true:.4} in {} steps", cfg.steps));
        shared.runs.push(density_run(format!("AC3 {name}"), &truth, &data, cfg.beta2, report.telemetry));
    }
    (pass, format!("{} (tolerance {TOL} nats)", notes.join("; ")))
}

fn mi_config(seed: u64) -> TrainConfig {
    TrainConfig {
        n_components: 32,
        batch_size: 16,
        data_batch: Some(256),
        learning_rate: 1e-3,
        steps: 3_000,
        hidden: vec![32, 32],
        seed,
        ..TrainConfig::default()
    }
}

fn ac5(shared: &mut Shared) -> Outcome {
    const SIZES: [usize; 3] = [1_000, 5_000, 10_000];
    const ACCURACY_SIZE: usize = 5_000;
    const TOL_BITS: f64 = 0.1;
    const QUAD_RES: usize = 1001;
    let mut non_finite = Vec::new();
    let mut worst = 0.0f64;
    let mut oracle_gap = 0.0f64;
    for seed in 1..=10u64 {
        for &n in &SIZES {
            let (spec, xy) = gen_mog(seed, n);
            let mix = spec.to_mixture().unwrap();
            let truth = oracle::cs_qmi(&mix, QUAD_RES).unwrap_or(f64::NAN);
            oracle_gap = oracle_gap.max((truth - cs_qmi(&mix, &[0], &[1]).unwrap()).abs());
            let cfg = mi_config(seed);
            let est = match mi_pipeline(&cfg, &xy, &[0], &[1]) {
                Ok(e) => e,
                Err(e) => {
                    non_finite.push(format!("seed {seed} n {n}: {e}"));
                    continue;
                }
            };
            if !est.qmi_sgm.is_finite() || !est.renyi_mi_ratio.is_finite() {
                non_finite.push(format!("seed {seed} n {n}: qmi {} renyi {}", est.qmi_sgm, est.renyi_mi_ratio));
            }
            if n == ACCURACY_SIZE {
                let err = (est.qmi_sgm - truth).abs();
                worst = worst.max(if err.is_finite() { err } else { f64::INFINITY });
            }
            let mut run = density_run(
                format!("AC5 density seed {seed} n {n}"),
                &mix,
                &xy,
                cfg.beta2,
                est.density_report.telemetry,
            );
            run.sup =
                oracle::quadratic_norm(&mix.normalize().unwrap(), QUAD_RES).map(|q| q.value.sqrt()).unwrap_or(f64::NAN);
            shared.runs.push(run);
            shared.runs.push(ratio_run(
                format!("AC5 ratio seed {seed} n {n}"),
                &mix,
                &xy,
                seed,
                cfg.beta2,
                est.ratio_report.telemetry,
            ));
        }
    }
    let pass = non_finite.is_empty() && worst <= TOL_BITS;
    let mut detail = format!(
        "30 runs, {} non-finite; worst |qmi_sgm - oracle| at {ACCURACY_SIZE} samples {worst:.4} bits (tolerance {TOL_BITS}); \
         oracle vs closed form {oracle_gap:.1e} bits",
        non_finite.len()
    );
    if !non_finite.is_empty() {
        detail.push_str(&format!(" [{}]", non_finite.join("; ")));
    }
    (pass, detail)
}

/// Ratio run on `p_xy` against `p_x p_y`, bounded by `sqrt(∫ p_xy² / (p_x p_y))`.
fn ratio_run(
    label: String,
    mix: &FiniteMixture<f64>,
    xy: &PointSet<f64>,
    seed: u64,
    beta: f64,
    telemetry: Vec<TelemetryRow>,
) -> BoundedRun {
    let joint = mix.normalize().unwrap();
    let (px, py) = (joint.marginalize(&[0]).unwrap(), joint.marginalize(&[1]).unwrap());
    let r = |z: &[f64]| {
        joint.eval_density(z).unwrap() / (px.eval_density(&z[..1]).unwrap() * py.eval_density(&z[1..]).unwrap())
    };
    let a: Vec<f64> = xy.rows().map(r).collect();
    let q = shuffled_pairs(xy, &[1], seed).unwrap();
    let b: Vec<f64> = q.rows().map(|z| r(z).powi(2)).collect();
    let sup = oracle::renyi_mi(&joint, 1001).map(|nats| (nats / 2.0).exp()).unwrap_or(f64::NAN);
    BoundedRun { label, sup, data_se: ratio_se(&a, &b, false), beta, telemetry }
}

/// Standard error of a bias-corrected moving average after `t` updates with
/// rate `beta`, for inputs of standard deviation `sd`.
fn filtered_se(sd: f64, beta: f64, t: usize) -> f64 {
    let t = t as i32;
    let factor = (1.0 - beta).powi(2) * (1.0 - beta.powi(2 * t)) / ((1.0 - beta * beta) * (1.0 - beta.powi(t)).powi(2));
    sd * factor.sqrt()
}

fn ac4(shared: &mut Shared) -> Outcome {
    const SE_MULT: f64 = 3.0;
    if shared.runs.is_empty() {
        return (false, "no training runs recorded".into());
    }
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for run in &shared.runs {
        let raw: Vec<f64> = run.telemetry.iter().map(|r| r.k_raw / r.v_raw.sqrt()).collect();
        // Successive differences remove the learning trend from the spread.
        let diffs = raw.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (raw.len().max(2) - 1) as f64;
        let sd = (diffs / 2.0).sqrt();
        for row in &run.telemetry {
            let se = filtered_se(sd, run.beta, row.step).hypot(run.data_se);
            let z = (row.j - run.sup) / se.max(f64::MIN_POSITIVE);
            worst = worst.max(z);
            if !(row.j <= run.sup + SE_MULT * se) {
                violations.push(format!(
                    "{} step {}: J {:.4} > {:.4} + {SE_MULT}*{se:.2e}",
                    run.label, row.step, row.j, run.sup
                ));
                break;
            }
        }
    }
    let pass = violations.is_empty();
    let mut detail = format!("{} runs, largest (J - sup)/SE {worst:.2} (limit {SE_MULT})", shared.runs.len());
    if !pass {
        detail.push_str(&format!("; {} runs exceed: {}", violations.len(), violations.join("; ")));
    }
    (pass, detail)
}

fn ac6(_: &mut Shared) -> Outcome {
    const TOL: f64 = 1e-10;
    let (_, data) = gen_mog(6, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(0xac6);
    let net =
        ImogNetwork::<f64>::init(ImogArch::new(8, 2, vec![16], 6), Some(Frame::from_points(&data)), None).unwrap();
    let noise = uniform_tensor(&mut rng, 4, 1);
    let x = Tensor::new(data.len(), 2, data.as_slice().to_vec());
    let j_p = |beta: f64| {
        let mut gt = GradTape::new();
        let h = net.forward_tape(&mut gt, None, &ScanBatch::grid(8, &noise)).unwrap();
        let w = gt.tape.scale(h.w, beta);
        let k = kernels::density_mean(&mut gt.tape, w, h.m, h.a, &x);
        let v = kernels::self_overlap_mean(&mut gt.tape, w, h.m, h.a);
        gt.tape.value(k).item() / gt.tape.value(v).item().sqrt()
    };
    let q = uniform_points(&mut rng, 150, 2);
    let ratio = RatioNetwork::<f64>::init(2, vec![16], 7, Some(Frame::from_points(&q))).unwrap();
    let j_pq = |beta: f64| {
        let mut gt = GradTape::new();
        let tp = ratio.forward_tape(&mut gt, None, &data).unwrap();
        let tq = ratio.forward_tape(&mut gt, None, &q).unwrap();
        let (tp, tq) = (gt.tape.scale(tp, beta), gt.tape.scale(tq, beta));
        let k = gt.tape.mean(tp);
        let sq = gt.tape.square(tq);
        let v = gt.tape.mean(sq);
        gt.tape.value(k).item() / gt.tape.value(v).item().sqrt()
    };
    let cfg = TrainConfig { n_components: 8, freeze_draws: 4, ..TrainConfig::default() };
    let frozen = freeze_density(&cfg, &net).unwrap();
    let j_frozen = |beta: f64| mixture_ce(&frozen.scaled(beta).unwrap(), &data).unwrap();

    let (base_p, base_pq, base_f) = (j_p(1.0), j_pq(1.0), j_frozen(1.0));
    let mut worst = 0.0f64;
    for beta in [0.1, 10.0] {
        worst = worst
            .max(rel_err(j_p(beta), base_p))
            .max(rel_err(j_pq(beta), base_pq))
            .max(rel_err(j_frozen(beta), base_f));
    }
    (worst < TOL, format!("largest relative change of J_p, J_p,q and frozen J_p over beta in {{0.1, 10}}: {worst:.1e} (tolerance {TOL:.0e})"))
}

fn ac7(_: &mut Shared) -> Outcome {
    const VR_BAND: f64 = 0.02;
    let mut rows = Vec::new();
    let (mut ce_wins, mut vr_ok, mut em_vr_lower) = (0, 0, 0);
    for seed in 1..=5u64 {
        let (spec, data) = gen_generalized(seed, GENERALIZED_SAMPLES);
        let centers = spec.centers_points();
        let cfg = TrainConfig {
            n_components: 32,
            batch_size: 16,
            data_batch: Some(1024),
            learning_rate: 3e-4,
            steps: 10_000,
            hidden: vec![32, 32],
            seed,
            ..TrainConfig::default()
        };
        let (net, _) = train_density(&cfg, &data).unwrap();
        let sgm = freeze_density(&cfg, &net).unwrap();
        let em = em_fit(&data, &EmConfig { k: N_CENTERS, iters: 200, seed, ..EmConfig::default() }).unwrap().mixture;
        let score = |m: &FiniteMixture<f64>| {
            (
                mixture_ce(m, &data).unwrap(),
                mixture_validation_rate(m, &centers, VR_TIGHT).unwrap(),
                mixture_validation_rate(m, &centers, VR_LOOSE).unwrap(),
            )
        };
        let (s, e) = (score(&sgm), score(&em));
        ce_wins += usize::from(s.0 >= e.0);
        vr_ok += usize::from((s.2 - 1.0).abs() <= VR_BAND);
        em_vr_lower += usize::from(e.1 < s.1);
        rows.push(format!(
            "#{seed} CE {:.3}/{:.3} VR1e-4 {:.2}/{:.2} VR1e-2 {:.2}/{:.2}",
            s.0, e.0, s.1, e.1, s.2, e.2
        ));
    }
    let pass = ce_wins >= 4 && vr_ok == 5 && em_vr_lower >= 4;
    (
        pass,
        format!(
            "SGM CE >= EM on {ce_wins}/5 (need 4); SGM VR(1e-2) within 1 +- {VR_BAND} on {vr_ok}/5 (need 5); \
             EM VR(1e-4) < SGM on {em_vr_lower}/5 (need 4) [SGM/EM: {}]",
            rows.join("; ")
        ),
    )
}

fn ac8(shared: &mut Shared) -> Outcome {
    const EVAL_PAIRS: usize = 1_000;
    const PROBE_GRID: usize = 1_000;
    const MATCH_RATE: f64 = 0.9;
    let mut rows = Vec::new();
    let (mut wins, mut hits, mut probes) = (0, 0.0, 0);
    for seed in 1..=5u64 {
        let (spec, data) = gen_markov(seed);
        let x = data.columns(&[0]).unwrap();
        let y = data.columns(&[1]).unwrap();
        // Pairs spread over all trajectories rather than the first one.
        let stride = data.len() / EVAL_PAIRS;
        let idx: Vec<usize> = (0..EVAL_PAIRS).map(|i| i * stride + stride / 2).collect();
        let (xe, ye) = (x.select(&idx), y.select(&idx));
        let cfg = TrainConfig {
            n_components: 32,
            batch_size: 16,
            learning_rate: 3e-3,
            steps: 10_000,
            hidden: vec![32, 32],
            freeze_draws: 4,
            seed,
            ..TrainConfig::default()
        };
        let (net, report) = train_conditional(&cfg, &x, &y).unwrap();
        let a: Vec<f64> = data.rows().map(|r| spec.density(r[0], r[1])).collect();
        let b: Vec<f64> = x.as_slice().iter().map(|&xi| spec.conditional_norm(&[xi])).collect();
        shared.runs.push(BoundedRun {
            label: format!("AC8 conditional seed {seed}"),
            sup: spec.conditional_norm(x.as_slice()).sqrt(),
            data_se: ratio_se(&a, &b, true),
            beta: cfg.beta2,
            telemetry: report.telemetry,
        });
        let mut sgm = |xi: &[f64]| freeze_conditional(&cfg, &net, xi);
        let j_sgm = conditional_ce(&mut sgm, &xe, &ye).unwrap();
        let matched = transition_match(&mut sgm, &spec, PROBE_GRID).unwrap();
        let em =
            em_fit(&data, &EmConfig { k: MARKOV_STATES, iters: 200, seed, ..EmConfig::default() }).unwrap().mixture;
        let mut gmm = |xi: &[f64]| gmm_conditional(&em, xi, &[0], &[1]);
        let j_em = conditional_ce(&mut gmm, &xe, &ye).unwrap();
        wins += usize::from(j_sgm >= j_em);
        hits += matched * spec.states() as f64;
        probes += spec.states();
        rows.push(format!("#{seed} J {j_sgm:.3}/{j_em:.3} match {matched:.1}"));
    }
    let rate = hits / probes as f64;
    let pass = wins >= 4 && rate >= MATCH_RATE;
    (
        pass,
        format!(
            "SGM J_Y|X >= EM on {wins}/5 (need 4); argmax matches the likely transition for {:.0}% of {probes} probe states \
             (need {:.0}%) [SGM/EM: {}]",
            100.0 * rate,
            100.0 * MATCH_RATE,
            rows.join("; ")
        ),
    )
}

fn ac9(_: &mut Shared) -> Outcome {
    const THRESHOLD: f64 = 0.95;
    const JITTER: f64 = 0.1;
    let mut aurocs = Vec::new();
    for seed in 1..=5u64 {
        let data = two_moons(seed, 1_000, JITTER);
        let inside = two_moons(seed + 1_000, 500, JITTER);
        let outside = ring(seed + 2_000, 500, [0.5, 0.25], 2.0, JITTER);
        let cfg = TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            steps: 2_000,
            hidden: vec![32, 32],
            seed,
            ..TrainConfig::default()
        };
        let out = train_adversarial(&cfg, &data, Some((&inside, &outside))).unwrap();
        aurocs.push(out.probe.map(|p| p.auroc).unwrap_or(f64::NAN));
    }
    let mut sorted = aurocs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    (
        median > THRESHOLD,
        format!(
            "median AUROC over 5 seeds {median:.4} (need > {THRESHOLD}) [{}]",
            aurocs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn sgm(args: &[&str]) -> i32 {
    sgm_core::cli::run(std::iter::once("sgm").chain(args.iter().copied()).map(std::ffi::OsString::from))
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn ac10(_: &mut Shared) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |name: &str| -> PathBuf { root.join(name) };
    let s = |path: PathBuf| path.to_string_lossy().into_owned();
    let (mog, markov, moons, ringd) = (s(p("mog")), s(p("markov")), s(p("moons")), s(p("ring")));
    let setup: [Vec<String>; 4] = [
        vec!["gen-data", "--kind", "mog", "--seed", "3", "--samples", "600", "--out", &mog],
        vec!["gen-data", "--kind", "markov", "--seed", "3", "--starts", "5", "--length", "120", "--out", &markov],
        vec!["gen-data", "--kind", "moons", "--seed", "3", "--samples", "300", "--out", &moons],
        vec!["gen-data", "--kind", "ring", "--seed", "4", "--samples", "300", "--out", &ringd],
    ]
    .map(|v| v.into_iter().map(String::from).collect());
    for args in &setup {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        if sgm(&refs) != 0 {
            return (false, format!("setup run failed: {}", args.join(" ")));
        }
    }
    let data = |d: &str| format!("{d}/data.csv");
    let small = ["--steps", "40", "--n-components", "6", "--hidden", "8", "--freeze-draws", "3", "--seed", "5"];
    let with =
        |head: &[&str], extra: &[&str]| -> Vec<String> { head.iter().chain(extra).map(|s| s.to_string()).collect() };
    let mog_data = data(&mog);
    let markov_data = data(&markov);
    let moons_data = data(&moons);
    let ring_data = data(&ringd);
    let mog_spec = format!("{mog}/spec.json");
    let markov_spec = format!("{markov}/spec.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("gen-data", with(&["gen-data", "--kind", "generalized", "--seed", "9", "--samples", "400"], &[])),
        ("train-density sgm", with(&["train-density", "--data", &mog_data, "--grid", "12"], &small)),
        (
            "train-density em",
            with(
                &["train-density", "--data", &mog_data, "--method", "em", "--spec", &mog_spec, "--em-iters", "20"],
                &[],
            ),
        ),
        ("train-conditional sgm", with(&["train-conditional", "--data", &markov_data], &small)),
        (
            "train-conditional em",
            with(&["train-conditional", "--data", &markov_data, "--method", "em", "--spec", &markov_spec], &[]),
        ),
        ("estimate-mi", with(&["estimate-mi", "--data", &mog_data, "--sizes", "200,600"], &small)),
        (
            "train-gan2d",
            with(
                &[
                    "train-gan2d",
                    "--data",
                    &moons_data,
                    "--probe-in",
                    &moons_data,
                    "--probe-out",
                    &ring_data,
                    "--samples",
                    "50",
                ],
                &small,
            ),
        ),
        ("oracle", with(&["oracle", "--spec", &mog_spec, "--quantity", "qmi", "--resolution", "200"], &[])),
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    for (i, (name, args)) in runs.iter().enumerate() {
        let outs = [p(&format!("run{i}a")), p(&format!("run{i}b"))];
        for out in &outs {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = s(out.clone());
            full.extend(["--out", &out]);
            let code = sgm(&full);
            if code != 0 {
                failures.push(format!("{name} exited {code}"));
            }
        }
        let (a, b) = (files(&outs[0]), files(&outs[1]));
        if a.is_empty() || a != b {
            failures.push(format!("{name} outputs differ"));
        }
        compared += a.len();
        if *name == "train-density sgm" {
            let manifest: serde_json::Value = serde_json::from_slice(&a["manifest.json"]).unwrap();
            let cfg_path = p("replay.json");
            std::fs::write(&cfg_path, serde_json::to_vec(&manifest["config"]["train"]).unwrap()).unwrap();
            let replay = p("replay");
            let code = sgm(&[
                "train-density",
                "--data",
                &mog_data,
                "--grid",
                "12",
                "--config",
                &s(cfg_path),
                "--out",
                &s(replay.clone()),
            ]);
            let mut c = files(&replay);
            c.remove("manifest.json");
            let mut expected = a.clone();
            expected.remove("manifest.json");
            if code != 0 || c != expected {
                failures.push("train-density replayed from its manifest differs".into());
            }
        }
    }
    let evals = [
        vec![
            "eval",
            "--model",
            &format!("{}/model.ckpt", s(p("run1a"))),
            "--data",
            &mog_data,
            "--spec",
            &mog_spec,
            "--freeze-draws",
            "3",
        ],
        vec!["eval", "--model", &format!("{}/model.json", s(p("run2a"))), "--data", &mog_data, "--spec", &mog_spec],
        vec![
            "eval",
            "--model",
            &format!("{}/model.ckpt", s(p("run3a"))),
            "--data",
            &markov_data,
            "--spec",
            &markov_spec,
            "--max-pairs",
            "50",
        ],
    ]
    .map(|v| v.into_iter().map(String::from).collect::<Vec<_>>());
    for (i, args) in evals.iter().enumerate() {
        let outs = [p(&format!("eval{i}a")), p(&format!("eval{i}b"))];
        for out in &outs {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = s(out.clone());
            full.extend(["--out", &out]);
            if sgm(&full) != 0 {
                failures.push(format!("eval {i} failed"));
            }
        }
        let (a, b) = (files(&outs[0]), files(&outs[1]));
        if a.is_empty() || a != b {
            failures.push(format!("eval {i} outputs differ"));
        }
        compared += a.len();
    }
    let pass = failures.is_empty();
    let mut detail = format!(
        "{} commands run twice, {compared} output files compared, plus a replay from manifest",
        runs.len() + evals.len()
    );
    if !pass {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    (pass, detail)
}
