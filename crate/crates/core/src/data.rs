//! Seeded synthetic data: Gaussian and generalized mixtures on the unit square,
//! a continuous-state Markov chain, and the two-moons/ring pair used as an
//! out-of-distribution probe.
//!
//! Every generator returns its spec alongside the samples so that exact
//! densities and quadratic norms can be evaluated later.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result, SgmError};
use crate::mixture::{FiniteMixture, GaussianComponent};
use crate::points::PointSet;

pub const N_CENTERS: usize = 20;
pub const CENTER_RANGE: (f64, f64) = (0.2, 0.8);
pub const GAUSS_VAR_RANGE: (f64, f64) = (1e-4, 2e-3);
pub const LAPLACE_SCALE_RANGE: (f64, f64) = (0.01, 0.2);
pub const UNIFORM_SIDE_RANGE: (f64, f64) = (0.01, 0.2);
pub const WEIGHT_RANGE: (f64, f64) = (0.5, 1.5);
pub const GENERALIZED_SAMPLES: usize = 200_000;

pub const MARKOV_STATES: usize = 10;
pub const MARKOV_STAY: f64 = 0.7;
pub const MARKOV_VAR_RANGE: (f64, f64) = (5e-4, 2e-3);
pub const MARKOV_STARTS: usize = 100;
pub const MARKOV_LENGTH: usize = 1000;

/// Panels per piece of the 1-D composite Simpson rule used for non-Gaussian overlaps.
const SIMPSON_PANELS: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplace,
    Uniform,
}

/// Product-form mixture: each center carries one family and a per-coordinate
/// scale (variance for Gaussian, `b` for Laplace, side length for uniform).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub families: Vec<Family>,
    pub scales: Vec<Vec<f64>>,
    /// Unnormalized weights.
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Kernel1 {
    family: Family,
    center: f64,
    scale: f64,
}

impl Kernel1 {
    fn density(&self, x: f64) -> f64 {
        let d = x - self.center;
        match self.family {
            Family::Gaussian => (-0.5 * d * d / self.scale).exp() / (2.0 * std::f64::consts::PI * self.scale).sqrt(),
            Family::Laplace => (-d.abs() / self.scale).exp() / (2.0 * self.scale),
            Family::Uniform => {
                if d.abs() <= 0.5 * self.scale {
                    1.0 / self.scale
                } else {
                    0.0
                }
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        let r = match self.family {
            Family::Gaussian => 12.0 * self.scale.sqrt(),
            Family::Laplace => 40.0 * self.scale,
            Family::Uniform => 0.5 * self.scale,
        };
        (self.center - r, self.center + r)
    }

    /// Points where the density is not smooth.
    fn kinks(&self) -> Vec<f64> {
        match self.family {
            Family::Gaussian => vec![],
            Family::Laplace => vec![self.center],
            Family::Uniform => vec![self.center - 0.5 * self.scale, self.center + 0.5 * self.scale],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.center + self.scale.sqrt() * z
            }
            Family::Laplace => {
                // Inverse CDF on u in (-1/2, 1/2).
                let u: f64 = rng.random::<f64>() - 0.5;
                self.center - self.scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            Family::Uniform => self.center + self.scale * (rng.random::<f64>() - 0.5),
        }
    }
}

/// `∫ a(x) b(x) dx`, exact for two Gaussians and piecewise Simpson otherwise.
fn overlap_1d(a: Kernel1, b: Kernel1) -> f64 {
    if a.family == Family::Gaussian && b.family == Family::Gaussian {
        let v = a.scale + b.scale;
        let d = a.center - b.center;
        return (-0.5 * d * d / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    }
    let (la, ha) = a.support();
    let (lb, hb) = b.support();
    let (lo, hi) = (la.max(lb), ha.min(hb));
    if lo >= hi {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    cuts.extend(a.kinks().into_iter().chain(b.kinks()).filter(|&k| k > lo && k < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| simpson(|x| a.density(x) * b.density(x), w[0], w[1], SIMPSON_PANELS)).sum()
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    if h <= 0.0 {
        return 0.0;
    }
    // Endpoints are nudged inward so one-sided limits are used at kinks.
    let eps = h * 1e-9;
    let mut s = f(lo + eps) + f(hi - eps);
    for i in 1..panels {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 || self.families.len() != n || self.scales.len() != n || self.weights.len() != n {
            return Err(SgmError::Format("mixture spec fields disagree in length".into()));
        }
        let dims_ok = self.centers.iter().chain(&self.scales).all(|v| v.len() == self.dim);
        if self.dim == 0 || !dims_ok {
            return Err(SgmError::Format("mixture spec has inconsistent dimensions".into()));
        }
        if self.scales.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite()))
            || self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite()))
        {
            return Err(SgmError::Format("mixture spec scales and weights must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    fn kernel(&self, i: usize, k: usize) -> Kernel1 {
        Kernel1 { family: self.families[i], center: self.centers[i][k], scale: self.scales[i][k] }
    }

    /// Exact normalized density.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(i, p)| p * (0..self.dim).map(|k| self.kernel(i, k).density(x[k])).product::<f64>())
            .sum()
    }

    /// `∫ p²`, from per-coordinate 1-D overlaps.
    pub fn quadratic_norm(&self) -> f64 {
        let p = self.probabilities();
        let mut total = 0.0;
        for i in 0..self.len() {
            for j in 0..=i {
                let o: f64 = (0..self.dim).map(|k| overlap_1d(self.kernel(i, k), self.kernel(j, k))).product();
                total += if i == j { 1.0 } else { 2.0 } * p[i] * p[j] * o;
            }
        }
        total
    }

    /// `√∫p²`, the supremum of the cross-entropy score on this distribution.
    pub fn ce_bound(&self) -> f64 {
        self.quadratic_norm().sqrt()
    }

    pub fn centers_points(&self) -> PointSet<f64> {
        PointSet::from_rows(&self.centers).expect("validated spec")
    }

    /// The spec as a normalized Gaussian mixture, if every center is Gaussian.
    pub fn to_mixture(&self) -> Option<FiniteMixture<f64>> {
        if self.families.iter().any(|&f| f != Family::Gaussian) {
            return None;
        }
        let p = self.probabilities();
        let comps = (0..self.len())
            .map(|i| GaussianComponent::new(p[i], self.centers[i].clone(), self.scales[i].clone()))
            .collect::<Result<Vec<_>>>()
            .ok()?;
        FiniteMixture::new(comps).ok()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> PointSet<f64> {
        let p = self.probabilities();
        let mut cumulative = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for q in &p {
            acc += q;
            cumulative.push(acc);
        }
        let mut out = PointSet::with_capacity(self.dim, n);
        let mut row = vec![0.0; self.dim];
        for _ in 0..n {
            let u = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(p.len() - 1);
            for (k, r) in row.iter_mut().enumerate() {
                *r = self.kernel(i, k).sample(rng);
            }
            out.push(&row);
        }
        out
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..hi)
}

fn draw_centers(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..N_CENTERS).map(|_| (0..dim).map(|_| uniform(rng, CENTER_RANGE)).collect()).collect()
}

/// 20 Gaussian centers in `[0.2, 0.8]²` with diagonal variances from
/// `U(1e-4, 2e-3)` and weights from `U(0.5, 1.5)`, plus `n` samples.
pub fn gen_mog(seed: u64, n: usize) -> (MixtureSpec, PointSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2;
    let centers = draw_centers(&mut rng, dim);
    let scales = (0..N_CENTERS).map(|_| (0..dim).map(|_| uniform(&mut rng, GAUSS_VAR_RANGE)).collect()).collect();
    let weights = (0..N_CENTERS).map(|_| uniform(&mut rng, WEIGHT_RANGE)).collect();
    let spec = MixtureSpec { dim, centers, families: vec![Family::Gaussian; N_CENTERS], scales, weights };
    let samples = spec.sample(&mut rng, n);
    (spec, samples)
}

/// Like [`gen_mog`], but each center is Gaussian, Laplace (scale from
/// `U(0.01, 0.2)`) or uniform (side from `U(0.01, 0.2)`) with equal probability.
pub fn gen_generalized(seed: u64, n: usize) -> (MixtureSpec, PointSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2;
    let centers = draw_centers(&mut rng, dim);
    let mut families = Vec::with_capacity(N_CENTERS);
    let mut scales = Vec::with_capacity(N_CENTERS);
    for _ in 0..N_CENTERS {
        let family = [Family::Gaussian, Family::Laplace, Family::Uniform][rng.random_range(0..3)];
        let range = match family {
            Family::Gaussian => GAUSS_VAR_RANGE,
            Family::Laplace => LAPLACE_SCALE_RANGE,
            Family::Uniform => UNIFORM_SIDE_RANGE,
        };
        families.push(family);
        scales.push((0..dim).map(|_| uniform(&mut rng, range)).collect());
    }
    let weights = (0..N_CENTERS).map(|_| uniform(&mut rng, WEIGHT_RANGE)).collect();
    let spec = MixtureSpec { dim, centers, families, scales, weights };
    let samples = spec.sample(&mut rng, n);
    (spec, samples)
}

/// Continuous-state Markov chain on `[0, 1]`: the state of `x` is its decile,
/// the next destination is drawn from that state's row, and `y` is Gaussian
/// around the destination's center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub centers: Vec<f64>,
    /// Row-stochastic; row `i` puts 0.7 on column `permutation[i]`.
    pub transition: Vec<Vec<f64>>,
    pub permutation: Vec<usize>,
    /// Variance of the Gaussian around each destination center.
    pub variances: Vec<f64>,
    pub starts: usize,
    pub length: usize,
}

impl MarkovSpec {
    pub fn states(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.states();
        let square = self.transition.len() == s && self.transition.iter().all(|r| r.len() == s);
        if s == 0 || !square || self.permutation.len() != s || self.variances.len() != s {
            return Err(SgmError::Format("markov spec fields disagree in size".into()));
        }
        if self.transition.iter().any(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 || r.iter().any(|&p| p < 0.0)) {
            return Err(SgmError::Format("transition rows must be probability vectors".into()));
        }
        if self.variances.iter().any(|&v| !(v > 0.0)) {
            return Err(SgmError::Format("markov variances must be positive".into()));
        }
        Ok(())
    }

    /// Discrete state of a continuous position (clamped to the end states).
    pub fn state_of(&self, x: f64) -> usize {
        let s = self.states();
        ((x * s as f64).floor().max(0.0) as usize).min(s - 1)
    }

    /// Most likely destination state from `state`.
    pub fn likely_destination(&self, state: usize) -> usize {
        self.permutation[state]
    }

    /// `p(y | x)` as a normalized 1-D Gaussian mixture.
    pub fn conditional(&self, x: f64) -> FiniteMixture<f64> {
        let row = &self.transition[self.state_of(x)];
        let comps = row
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                GaussianComponent::new(p, vec![self.centers[j]], vec![self.variances[j]]).expect("validated")
            })
            .collect();
        FiniteMixture::new(comps).expect("row has positive mass")
    }

    /// `Ê_x ∫ p²(y | x) dy` over the given positions.
    pub fn conditional_norm(&self, xs: &[f64]) -> f64 {
        let per_state: Vec<f64> =
            (0..self.states()).map(|s| self.conditional((self.centers[s]).clamp(0.0, 1.0)).quadratic_norm()).collect();
        xs.iter().map(|&x| per_state[self.state_of(x)]).sum::<f64>() / xs.len() as f64
    }

    /// Transition probability density `p(y | x)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.conditional(x).density_unchecked(&[y])
    }
}

/// Ten-state chain with stay-probability 0.7 shuffled across destinations,
/// 100 uniform starts and 1000 steps each: `(x_t, x_{t+1})` pairs as 2-D points.
pub fn gen_markov(seed: u64) -> (MarkovSpec, PointSet<f64>) {
    gen_markov_sized(seed, MARKOV_STARTS, MARKOV_LENGTH)
}

pub fn gen_markov_sized(seed: u64, starts: usize, length: usize) -> (MarkovSpec, PointSet<f64>) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = MARKOV_STATES;
    let off = (1.0 - MARKOV_STAY) / (s - 1) as f64;
    let mut permutation: Vec<usize> = (0..s).collect();
    permutation.shuffle(&mut rng);
    let transition =
        (0..s).map(|i| (0..s).map(|j| if j == permutation[i] { MARKOV_STAY } else { off }).collect()).collect();
    let centers = (0..s).map(|k| (k as f64 + 0.5) / s as f64).collect();
    let variances = (0..s).map(|_| uniform(&mut rng, MARKOV_VAR_RANGE)).collect();
    let spec = MarkovSpec { centers, transition, permutation, variances, starts, length };

    let cumulative: Vec<Vec<f64>> = spec
        .transition
        .iter()
        .map(|r| {
            r.iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut pairs = PointSet::with_capacity(2, starts * length);
    for _ in 0..starts {
        let mut x: f64 = rng.random();
        for _ in 0..length {
            let row = &cumulative[spec.state_of(x)];
            let u = rng.random::<f64>() * row[s - 1];
            let j = row.partition_point(|&c| c <= u).min(s - 1);
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = spec.centers[j] + spec.variances[j].sqrt() * z;
            pairs.push(&[x, y]);
            x = y;
        }
    }
    (spec, pairs)
}

/// Two interleaved half circles with Gaussian jitter.
pub fn two_moons(seed: u64, n: usize, noise: f64) -> PointSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PointSet::with_capacity(2, n);
    for i in 0..n {
        let t = rng.random::<f64>() * std::f64::consts::PI;
        let (x, y) = if i % 2 == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        let zx: f64 = StandardNormal.sample(&mut rng);
        let zy: f64 = StandardNormal.sample(&mut rng);
        out.push(&[x + noise * zx, y + noise * zy]);
    }
    out
}

/// Jittered circle of the given radius around `center`.
pub fn ring(seed: u64, n: usize, center: [f64; 2], radius: f64, noise: f64) -> PointSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PointSet::with_capacity(2, n);
    for _ in 0..n {
        let t = rng.random::<f64>() * std::f64::consts::TAU;
        let z: f64 = StandardNormal.sample(&mut rng);
        let r = radius + noise * z;
        out.push(&[center[0] + r * t.cos(), center[1] + r * t.sin()]);
    }
    out
}

/// Sidecar describing how a dataset was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Mixture(MixtureSpec),
    Markov(MarkovSpec),
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Mixture(m) => m.validate(),
            DatasetSpec::Markov(m) => m.validate(),
        }
    }
}

pub fn write_spec(path: impl AsRef<Path>, spec: &DatasetSpec) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, spec)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_spec(path: impl AsRef<Path>) -> Result<DatasetSpec> {
    let spec: DatasetSpec = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    spec.validate()?;
    Ok(spec)
}

/// One point per row, 17 significant digits, with an `x0,x1,...` header.
pub fn write_csv<W: Write>(mut w: W, points: &PointSet<f64>) -> Result<()> {
    let header: Vec<String> = (0..points.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in points.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_csv_file(path: impl AsRef<Path>, points: &PointSet<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, points)?;
    w.flush()?;
    Ok(())
}

/// Reads comma-separated rows; a non-numeric first line is treated as a header.
pub fn read_csv<R: BufRead>(r: R) -> Result<PointSet<f64>> {
    let mut dim = None;
    let mut data = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(SgmError::Format(format!("line {}: {e}", lineno + 1))),
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(SgmError::Format(format!("line {}: expected {d} fields, got {}", lineno + 1, row.len())))
            }
            _ => {}
        }
        data.extend(row);
    }
    match dim {
        Some(d) => PointSet::new(d, data),
        None => usage("data file holds no points"),
    }
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<PointSet<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SgmError::Usage(format!("cannot open {}: {e}", path.display())))?;
    read_csv(BufReader::new(file))
}
