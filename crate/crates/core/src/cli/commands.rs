//! Subcommand implementations.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};

use super::output::{hash_file, InputHash, Manifest, RunDir, SCHEMA_VERSION};
use super::{
    Command, DataKind, EstimateMiArgs, EvalArgs, GenDataArgs, Method, OracleArgs, Quantity, TrainConditionalArgs,
    TrainDensityArgs, TrainFlags, TrainGanArgs,
};
use crate::autodiff::checkpoint::{self, AnyNetwork};
use crate::autodiff::{ImogNetwork, Tensor};
use crate::baselines::{em_fit, gmm_conditional, EmConfig, EmFit};
use crate::data::{
    gen_generalized, gen_markov_sized, gen_mog, read_csv_file, read_spec, ring, two_moons, write_csv_file, write_spec,
    DatasetSpec, Family, MarkovSpec, MixtureSpec, GENERALIZED_SAMPLES, MARKOV_LENGTH, MARKOV_STARTS, N_CENTERS,
};
use crate::error::{usage, Result};
use crate::estimators::{conditional_ce, evaluate, transition_match};
use crate::mixture::{cs_qmi, read_mixture, write_mixture, FiniteMixture};
use crate::oracle::{self, Bounds};
use crate::points::PointSet;
use crate::trainer::{
    freeze_conditional, freeze_density, mi_pipeline, train_adversarial, train_conditional, train_density, Mode,
    TrainConfig,
};

const MOG_SAMPLES: usize = 5_000;
const TOY_SAMPLES: usize = 1_000;
const RING_CENTER: [f64; 2] = [0.5, 0.25];
const RING_RADIUS: f64 = 2.0;
const SAMPLE_STREAM: u64 = 0x5a3b_1e55;
const PROBE_GRID: usize = 1000;
const GRID_MARGIN: f64 = 0.05;
const DENSITY_FREEZE_DRAWS: usize = 100;
// A conditional is frozen once per evaluated pair.
const CONDITIONAL_FREEZE_DRAWS: usize = 4;

pub(super) fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::TrainDensity(a) => train_density_cmd(a),
        Command::TrainConditional(a) => train_conditional_cmd(a),
        Command::EstimateMi(a) => estimate_mi(a),
        Command::TrainGan2d(a) => train_gan(a),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}

fn manifest(command: &'static str, seed: u64, config: Value, inputs: Vec<InputHash>) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "sgm",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        inputs,
    }
}

fn to_value<S: Serialize>(v: &S) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn read_points(path: &Path) -> Result<PointSet<f64>> {
    if !path.exists() {
        return usage(format!("data file {} does not exist", path.display()));
    }
    read_csv_file(path)
}

fn read_dataset_spec(path: &Path) -> Result<DatasetSpec> {
    if !path.exists() {
        return usage(format!("spec file {} does not exist", path.display()));
    }
    read_spec(path)
}

fn train_inputs(data: &Path, flags: &TrainFlags) -> Result<Vec<InputHash>> {
    let mut inputs = vec![hash_file(data)?];
    if let Some(c) = &flags.config {
        inputs.push(hash_file(c)?);
    }
    Ok(inputs)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let dir = RunDir::create(&a.out.out)?;
    let (points, spec) = match a.kind {
        DataKind::Mog => {
            let (s, p) = gen_mog(a.seed, a.samples.unwrap_or(MOG_SAMPLES));
            (p, Some(DatasetSpec::Mixture(s)))
        }
        DataKind::Generalized => {
            let (s, p) = gen_generalized(a.seed, a.samples.unwrap_or(GENERALIZED_SAMPLES));
            (p, Some(DatasetSpec::Mixture(s)))
        }
        DataKind::Markov => {
            let (s, p) = gen_markov_sized(a.seed, a.starts.unwrap_or(MARKOV_STARTS), a.length.unwrap_or(MARKOV_LENGTH));
            (p, Some(DatasetSpec::Markov(s)))
        }
        DataKind::Moons => (two_moons(a.seed, a.samples.unwrap_or(TOY_SAMPLES), a.noise), None),
        DataKind::Ring => (ring(a.seed, a.samples.unwrap_or(TOY_SAMPLES), RING_CENTER, RING_RADIUS, a.noise), None),
    };
    if points.is_empty() {
        return usage("requested an empty dataset");
    }
    write_csv_file(dir.path("data.csv"), &points)?;
    let closed_form = match &spec {
        Some(s) => {
            write_spec(dir.path("spec.json"), s)?;
            spec_closed_form(s)?
        }
        None => Value::Null,
    };
    let config = json!({
        "kind": a.kind.to_possible_value_name(),
        "samples": a.samples,
        "starts": a.starts,
        "length": a.length,
        "noise": a.noise,
    });
    dir.manifest(&manifest("gen-data", a.seed, config, vec![]))?;
    dir.empty_telemetry()?;
    dir.json(
        "result.json",
        &json!({
            "kind": a.kind.to_possible_value_name(),
            "rows": points.len(),
            "dim": points.dim(),
            "closed_form": closed_form,
        }),
    )
}

trait ValueName {
    fn to_possible_value_name(&self) -> String;
}

impl<E: clap::ValueEnum> ValueName for E {
    fn to_possible_value_name(&self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

fn spec_closed_form(spec: &DatasetSpec) -> Result<Value> {
    Ok(match spec {
        DatasetSpec::Mixture(m) => {
            let qn = m.quadratic_norm();
            let qmi = match m.to_mixture() {
                Some(mix) if m.dim == 2 => Some(cs_qmi(&mix, &[0], &[1])?),
                _ => None,
            };
            json!({ "h2": -qn.ln(), "ce_bound": qn.sqrt(), "qmi_bits": qmi })
        }
        DatasetSpec::Markov(s) => json!({ "conditional_norm": s.conditional_norm(&s.centers) }),
    })
}

fn em_k(flags: &super::BaselineFlags) -> Result<usize> {
    if let Some(k) = flags.k {
        return Ok(k);
    }
    Ok(match &flags.spec {
        Some(p) => match read_dataset_spec(p)? {
            DatasetSpec::Mixture(m) => m.len(),
            DatasetSpec::Markov(m) => m.states(),
        },
        None => N_CENTERS,
    })
}

fn run_em(data: &PointSet<f64>, flags: &super::BaselineFlags, cfg: &TrainConfig) -> Result<(EmConfig, EmFit<f64>)> {
    let em = EmConfig { k: em_k(flags)?, iters: flags.em_iters, seed: cfg.seed, var_floor: cfg.var_floor };
    let fit = em_fit(data, &em)?;
    Ok((em, fit))
}

fn write_em(dir: &RunDir, fit: &EmFit<f64>) -> Result<()> {
    write_mixture(&fit.mixture, dir.path("model.json"))?;
    dir.table(
        "em_trace.csv",
        "iter,log_likelihood",
        fit.log_likelihood.iter().enumerate().map(|(i, &l)| vec![i as f64, l]),
    )?;
    dir.empty_telemetry()
}

fn em_result(em: &EmConfig, fit: &EmFit<f64>) -> Result<Value> {
    Ok(json!({
        "method": "em",
        "k": em.k,
        "iters": em.iters,
        "log_likelihood": fit.log_likelihood.last(),
        "reinitialized": fit.reinitialized,
        "h2": fit.mixture.renyi2_entropy()?,
    }))
}

fn with_spec_input(mut inputs: Vec<InputHash>, spec: &Option<std::path::PathBuf>) -> Result<Vec<InputHash>> {
    if let Some(p) = spec {
        inputs.push(hash_file(p)?);
    }
    Ok(inputs)
}

fn train_density_cmd(a: &TrainDensityArgs) -> Result<()> {
    let data = read_points(&a.data)?;
    let cfg = a.train.resolve(Mode::Density)?;
    let inputs = with_spec_input(train_inputs(&a.data, &a.train)?, &a.baseline.spec)?;
    let dir = RunDir::create(&a.out.out)?;
    let (config, result, model) = match a.baseline.method {
        Method::Sgm => {
            let (net, mut report) = train_density(&cfg, &data)?;
            checkpoint::save(&AnyNetwork::Imog(net.clone()), dir.path("model.ckpt"))?;
            report.checkpoint = Some("model.ckpt".into());
            dir.telemetry("telemetry.csv", &report.telemetry)?;
            let frozen = freeze_density(&cfg, &net)?;
            let result = json!({
                "method": "sgm",
                "report": to_value(&report)?,
                "frozen_components": frozen.len(),
                "frozen_h2": frozen.renyi2_entropy()?,
            });
            (json!({ "method": "sgm", "train": to_value(&cfg)? }), result, frozen)
        }
        Method::Em => {
            let (em, fit) = run_em(&data, &a.baseline, &cfg)?;
            write_em(&dir, &fit)?;
            (json!({ "method": "em", "em": to_value(&em)? }), em_result(&em, &fit)?, fit.mixture)
        }
    };
    if let Some(res) = a.grid {
        write_grid(&dir, &model, &data, res)?;
    }
    dir.manifest(&manifest("train-density", cfg.seed, config, inputs))?;
    dir.json("result.json", &result)
}

/// Density of `model` on a `res × res` grid over the data box (2-D only).
fn write_grid(dir: &RunDir, model: &FiniteMixture<f64>, data: &PointSet<f64>, res: usize) -> Result<()> {
    if data.dim() != 2 || res < 2 {
        return usage("density grids need 2-D data and at least 2 points per axis");
    }
    let b = data.bounds();
    let axis = |k: usize| -> Vec<f64> {
        let (lo, hi) = b[k];
        let pad = GRID_MARGIN * (hi - lo).max(f64::EPSILON);
        (0..res).map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (res - 1) as f64).collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut rows = Vec::with_capacity(res * res);
    for &x in &xs {
        for &y in &ys {
            rows.push(vec![x, y, model.eval_density(&[x, y])?]);
        }
    }
    dir.table("grid.csv", "x0,x1,density", rows)
}

fn split(data: &PointSet<f64>, x_dims: &[usize], y_dims: &[usize]) -> Result<(PointSet<f64>, PointSet<f64>)> {
    if x_dims.iter().any(|k| y_dims.contains(k)) {
        return usage("x and y column sets overlap");
    }
    Ok((data.columns(x_dims)?, data.columns(y_dims)?))
}

fn train_conditional_cmd(a: &TrainConditionalArgs) -> Result<()> {
    let data = read_points(&a.data)?;
    let (x, y) = split(&data, &a.x_dims, &a.y_dims)?;
    let cfg = a.train.resolve(Mode::Conditional)?;
    let inputs = with_spec_input(train_inputs(&a.data, &a.train)?, &a.baseline.spec)?;
    let dir = RunDir::create(&a.out.out)?;
    let dims = json!({ "x_dims": a.x_dims, "y_dims": a.y_dims });
    let (config, result) = match a.baseline.method {
        Method::Sgm => {
            let (net, mut report) = train_conditional(&cfg, &x, &y)?;
            checkpoint::save(&AnyNetwork::Imog(net), dir.path("model.ckpt"))?;
            report.checkpoint = Some("model.ckpt".into());
            dir.telemetry("telemetry.csv", &report.telemetry)?;
            (
                json!({ "method": "sgm", "dims": dims, "train": to_value(&cfg)? }),
                json!({ "method": "sgm", "dims": dims, "report": to_value(&report)? }),
            )
        }
        Method::Em => {
            let (em, fit) = run_em(&data, &a.baseline, &cfg)?;
            write_em(&dir, &fit)?;
            let mut result = em_result(&em, &fit)?;
            result["dims"] = dims.clone();
            (json!({ "method": "em", "dims": dims, "em": to_value(&em)? }), result)
        }
    };
    dir.manifest(&manifest("train-conditional", cfg.seed, config, inputs))?;
    dir.json("result.json", &result)
}

fn estimate_mi(a: &EstimateMiArgs) -> Result<()> {
    let data = read_points(&a.data)?;
    let cfg = a.train.resolve(Mode::Density)?;
    let inputs = train_inputs(&a.data, &a.train)?;
    let dir = RunDir::create(&a.out.out)?;
    let sizes = a.sizes.clone().unwrap_or_else(|| vec![data.len()]);
    if sizes.iter().any(|&n| n == 0 || n > data.len()) {
        return usage(format!("series sizes must lie in 1..={}", data.len()));
    }
    let mut series = Vec::with_capacity(sizes.len());
    let mut last = None;
    for &n in &sizes {
        let rows: Vec<usize> = (0..n).collect();
        let est = mi_pipeline(&cfg, &data.select(&rows), &a.x_dims, &a.y_dims)?;
        series.push(
            json!({ "n": n, "qmi_sgm": est.qmi_sgm, "renyi_mi_ratio": est.renyi_mi_ratio, "iq_hat": est.iq_hat }),
        );
        last = Some(est);
    }
    let est = last.expect("at least one size");
    dir.telemetry("telemetry.csv", &est.density_report.telemetry)?;
    dir.telemetry("ratio_telemetry.csv", &est.ratio_report.telemetry)?;
    if a.sizes.is_some() {
        dir.table(
            "mi_series.csv",
            "n,qmi_sgm,renyi_mi_ratio,iq_hat",
            series.iter().map(|s| {
                ["n", "qmi_sgm", "renyi_mi_ratio", "iq_hat"]
                    .iter()
                    .map(|k| s[*k].as_f64().unwrap_or(f64::NAN))
                    .collect()
            }),
        )?;
    }
    let config = json!({ "x_dims": a.x_dims, "y_dims": a.y_dims, "sizes": a.sizes, "train": to_value(&cfg)? });
    dir.manifest(&manifest("estimate-mi", cfg.seed, config, inputs))?;
    dir.json("result.json", &json!({ "estimates": to_value(&est)?, "series": series }))
}

fn train_gan(a: &TrainGanArgs) -> Result<()> {
    let data = read_points(&a.data)?;
    let cfg = a.train.resolve(Mode::Adversarial)?;
    let mut inputs = train_inputs(&a.data, &a.train)?;
    let probe = match (&a.probe_in, &a.probe_out) {
        (Some(pi), Some(po)) => {
            inputs.push(hash_file(pi)?);
            inputs.push(hash_file(po)?);
            Some((read_points(pi)?, read_points(po)?))
        }
        _ => None,
    };
    let dir = RunDir::create(&a.out.out)?;
    let out = train_adversarial(&cfg, &data, probe.as_ref().map(|(i, o)| (i, o)))?;
    checkpoint::save(&AnyNetwork::Generator(out.generator.clone()), dir.path("generator.ckpt"))?;
    checkpoint::save(&AnyNetwork::Ratio(out.discriminator.clone()), dir.path("discriminator.ckpt"))?;
    dir.telemetry("telemetry.csv", &out.generator_report.telemetry)?;
    dir.telemetry("disc_telemetry.csv", &out.discriminator_report.telemetry)?;

    let zdim = out.generator.arch().in_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLE_STREAM);
    let z: Vec<f64> = (0..a.samples * zdim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let samples = out.generator.generate(&Tensor::new(a.samples, zdim, z))?;
    write_csv_file(dir.path("samples.csv"), &samples)?;

    let config = json!({ "samples": a.samples, "train": to_value(&cfg)? });
    dir.manifest(&manifest("train-gan2d", cfg.seed, config, inputs))?;
    dir.json(
        "result.json",
        &json!({
            "generator_report": to_value(&out.generator_report)?,
            "discriminator_report": to_value(&out.discriminator_report)?,
            "auroc": out.probe.as_ref().map(|p| p.auroc),
            "collapse_steps": out.collapse_steps,
        }),
    )
}

type ConditionalFn<'a> = dyn FnMut(&[f64]) -> Result<FiniteMixture<f64>> + 'a;

enum Model {
    Sgm(Box<ImogNetwork<f64>>),
    Em(FiniteMixture<f64>),
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return usage(format!("model file {} does not exist", path.display()));
    }
    if checkpoint::is_checkpoint(path) {
        return match checkpoint::load::<f64>(path)? {
            AnyNetwork::Imog(net) => Ok(Model::Sgm(Box::new(net))),
            _ => usage("eval needs a density checkpoint, not a ratio or generator network"),
        };
    }
    Ok(Model::Em(read_mixture(path)?))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let data = read_points(&a.data)?;
    let model = load_model(&a.model)?;
    let spec = a.spec.as_deref().map(read_dataset_spec).transpose()?;
    let mut inputs = vec![hash_file(&a.model)?, hash_file(&a.data)?];
    if let Some(p) = &a.spec {
        inputs.push(hash_file(p)?);
    }
    let conditional = a.x_dims.is_some()
        || matches!(&spec, Some(DatasetSpec::Markov(_)))
        || matches!(&model, Model::Sgm(n) if n.is_conditional());
    let freeze_draws =
        a.freeze_draws.unwrap_or(if conditional { CONDITIONAL_FREEZE_DRAWS } else { DENSITY_FREEZE_DRAWS });
    let freeze_cfg = |net: &ImogNetwork<f64>| TrainConfig {
        freeze_draws,
        noise_dim: net.arch().noise_dim,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let dir = RunDir::create(&a.out.out)?;

    let result = if conditional {
        let x_dims = a.x_dims.clone().unwrap_or_else(|| vec![0]);
        let y_dims = a.y_dims.clone().unwrap_or_else(|| (0..data.dim()).filter(|k| !x_dims.contains(k)).collect());
        let (x, y) = split(&data, &x_dims, &y_dims)?;
        // Evenly spaced rows, so trajectory-ordered data is sampled throughout.
        let pairs = data.len().min(a.max_pairs);
        let stride = data.len() / pairs.max(1);
        let rows: Vec<usize> = (0..pairs).map(|i| i * stride + stride / 2).collect();
        let (x, y) = (x.select(&rows), y.select(&rows));
        let mut cond: Box<ConditionalFn> = match &model {
            Model::Sgm(net) => {
                let cfg = freeze_cfg(net);
                Box::new(move |xi: &[f64]| freeze_conditional(&cfg, net, xi))
            }
            Model::Em(mix) => {
                let (xd, yd) = (x_dims.clone(), y_dims.clone());
                Box::new(move |xi: &[f64]| gmm_conditional(mix, xi, &xd, &yd))
            }
        };
        let j = conditional_ce(&mut cond, &x, &y)?;
        let matched = match &spec {
            Some(DatasetSpec::Markov(s)) => Some(transition_match(&mut cond, s, PROBE_GRID)?),
            _ => None,
        };
        json!({ "conditional": true, "j_conditional": j, "transition_match": matched, "pairs": rows.len() })
    } else {
        let mix = match &model {
            Model::Sgm(net) => freeze_density(&freeze_cfg(net), net)?,
            Model::Em(mix) => mix.clone(),
        };
        let centers = match &spec {
            Some(DatasetSpec::Mixture(m)) => Some(m.centers_points()),
            _ => None,
        };
        let report = evaluate(&mix, &data, centers.as_ref())?;
        json!({ "conditional": false, "report": to_value(&report)?, "components": mix.len() })
    };
    let config = json!({
        "x_dims": a.x_dims, "y_dims": a.y_dims, "freeze_draws": freeze_draws, "max_pairs": a.max_pairs,
    });
    dir.manifest(&manifest("eval", a.seed, config, inputs))?;
    dir.empty_telemetry()?;
    dir.json("result.json", &result)
}

/// Box covering every kernel of a mixture spec with negligible mass outside.
fn spec_bounds(m: &MixtureSpec) -> Result<Bounds> {
    let mut lo = vec![f64::INFINITY; m.dim];
    let mut hi = vec![f64::NEG_INFINITY; m.dim];
    for i in 0..m.len() {
        for k in 0..m.dim {
            let s = m.scales[i][k];
            let r = match m.families[i] {
                Family::Gaussian => oracle::DEFAULT_SIGMAS * s.sqrt(),
                // Tail mass of a Laplace kernel beyond 16 scales is e^-16.
                Family::Laplace => 16.0 * s,
                Family::Uniform => 0.5 * s,
            };
            lo[k] = lo[k].min(m.centers[i][k] - r);
            hi[k] = hi[k].max(m.centers[i][k] + r);
        }
    }
    Bounds::new(lo, hi)
}

fn markov_bounds(s: &MarkovSpec) -> Result<Bounds> {
    let r = oracle::DEFAULT_SIGMAS * s.variances.iter().copied().fold(0.0, f64::max).sqrt();
    let lo = s.centers.iter().copied().fold(f64::INFINITY, f64::min) - r;
    let hi = s.centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + r;
    Bounds::new(vec![0.0, lo], vec![1.0, hi])
}

fn oracle_cmd(a: &OracleArgs) -> Result<()> {
    let spec = read_dataset_spec(&a.spec)?;
    let inputs = vec![hash_file(&a.spec)?];
    let res = a.resolution;
    let (value, closed): (f64, Option<f64>) = match (&spec, a.quantity) {
        (DatasetSpec::Mixture(m), Quantity::H2 | Quantity::CeBound) => {
            let b = spec_bounds(m)?;
            let f = |x: &[f64]| m.density(x);
            let mass = oracle::grid_integrate(f, &b, res)?.value;
            let sq = oracle::grid_integrate(|x| f(x).powi(2), &b, res)?.value / (mass * mass);
            if a.quantity == Quantity::H2 {
                (-sq.ln(), Some(-m.quadratic_norm().ln()))
            } else {
                (sq.sqrt(), Some(m.ce_bound()))
            }
        }
        (DatasetSpec::Mixture(m), Quantity::Qmi | Quantity::RenyiMi) => {
            if m.dim != 2 {
                return usage("mutual-information oracles need a 2-D spec");
            }
            let b = spec_bounds(m)?;
            if a.quantity == Quantity::Qmi {
                let closed = m.to_mixture().map(|mix| cs_qmi(&mix, &[0], &[1])).transpose()?;
                (oracle::cs_qmi_of(|x| m.density(x), &b, res)?, closed)
            } else {
                (oracle::renyi_mi_of(|x| m.density(x), &b, res)?, None)
            }
        }
        (DatasetSpec::Markov(s), Quantity::ConditionalNorm) => {
            let b = markov_bounds(s)?;
            let q = oracle::oracle_conditional_norm(|p| s.density(p[0], p[1]), &b, res)?;
            (q.value, Some(s.conditional_norm(&s.centers)))
        }
        _ => return usage(format!("quantity {} is not defined for this spec", a.quantity.to_possible_value_name())),
    };
    let dir = RunDir::create(&a.out.out)?;
    let config = json!({ "quantity": a.quantity.to_possible_value_name(), "resolution": res });
    dir.manifest(&manifest("oracle", 0, config, inputs))?;
    dir.empty_telemetry()?;
    dir.json(
        "result.json",
        &json!({
            "quantity": a.quantity.to_possible_value_name(),
            "oracle": value,
            "closed_form": closed,
            "abs_diff": closed.map(|c| (c - value).abs()),
        }),
    )
}
