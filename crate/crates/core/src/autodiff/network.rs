//! Networks that emit infinite-mixture parameters, probability ratios and
//! generator samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Block, GradTape, GroupId, Layout};
use super::tape::Var;
use super::tensor::Tensor;
use crate::error::{usage, Result};
use crate::mixture::{FiniteMixture, GaussianComponent, DEFAULT_VAR_FLOOR};
use crate::points::PointSet;
use crate::scalar::Scalar;

/// Initial component standard deviation as a fraction of the data half-width.
const INIT_SD_FRACTION: f64 = 0.1;
/// Largest initial |mean head| output after calibration (1 = bounding-box edge).
const INIT_MEAN_SPAN: f64 = 0.9;
const PROBE_NOISE_LEVELS: usize = 8;

/// Per-coordinate affine frame `x = center + half_width * u` of the data box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl Frame {
    pub fn identity(dim: usize) -> Self {
        Self { center: vec![0.0; dim], half_width: vec![1.0; dim] }
    }

    /// Bounding box of the data.
    pub fn from_points<T: Scalar>(data: &PointSet<T>) -> Self {
        let (center, half_width) = data
            .bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let (lo, hi) = (lo.as_f64(), hi.as_f64());
                let half = 0.5 * (hi - lo);
                (0.5 * (hi + lo), if half > 1e-12 { half } else { 1.0 })
            })
            .unzip();
        Self { center, half_width }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn normalize_into<T: Scalar>(&self, x: &[T], out: &mut Vec<T>) {
        for (k, &v) in x.iter().enumerate() {
            out.push((v - T::of(self.center[k])) / T::of(self.half_width[k]));
        }
    }
}

fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// One scanning input: a one-hot index and a noise vector in `[0,1)^noise_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanInput<T> {
    pub one_hot_index: usize,
    pub noise: Vec<T>,
}

/// A batch of scanning inputs, optionally paired with conditioning points.
#[derive(Clone, Debug)]
pub struct ScanBatch<T> {
    pub indices: Vec<usize>,
    pub noise: Tensor<T>,
    pub condition: Option<Tensor<T>>,
}

impl<T: Scalar> ScanBatch<T> {
    /// Every one-hot index crossed with every noise row; row `i * M + j` holds
    /// index `i` and noise row `j`.
    pub fn grid(n_components: usize, noise: &Tensor<T>) -> Self {
        let m = noise.rows();
        let dc = noise.cols();
        let mut indices = Vec::with_capacity(n_components * m);
        let mut data = Vec::with_capacity(n_components * m * dc);
        for i in 0..n_components {
            for j in 0..m {
                indices.push(i);
                data.extend_from_slice(noise.row(j));
            }
        }
        Self { indices, noise: Tensor::new(n_components * m, dc, data), condition: None }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Mixture heads recorded on a tape: `w` (n×1), `m` (n×d), `a` (n×d).
#[derive(Clone, Copy, Debug)]
pub struct MixtureHeads {
    pub w: Var,
    pub m: Var,
    pub a: Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImogArch {
    /// Number of one-hot scanning vectors.
    pub n_components: usize,
    pub noise_dim: usize,
    /// Dimension of the conditioning input; 0 for an unconditional network.
    pub cond_dim: usize,
    pub out_dim: usize,
    pub hidden: Vec<usize>,
    pub var_floor: f64,
    /// `w = exp(weight_bound * tanh(u))`.
    pub weight_bound: f64,
    pub seed: u64,
}

impl ImogArch {
    pub fn new(n_components: usize, out_dim: usize, hidden: Vec<usize>, seed: u64) -> Self {
        Self {
            n_components,
            noise_dim: 1,
            cond_dim: 0,
            out_dim,
            hidden,
            var_floor: DEFAULT_VAR_FLOOR,
            weight_bound: 4.0,
            seed,
        }
    }

    pub fn conditional(mut self, cond_dim: usize) -> Self {
        self.cond_dim = cond_dim;
        self
    }
}

struct ImogBlocks {
    embed: Block,
    input: Block,
    bias0: Block,
    hidden: Vec<(Block, Block)>,
    out_w: Block,
    out_b: Block,
}

fn imog_layout(arch: &ImogArch) -> (Layout, ImogBlocks) {
    let mut l = Layout::default();
    let h0 = arch.hidden[0];
    let embed = l.push(arch.n_components, h0);
    let input = l.push(arch.noise_dim + arch.cond_dim, h0);
    let bias0 = l.push(1, h0);
    let hidden = arch.hidden.windows(2).map(|w| (l.push(w[0], w[1]), l.push(1, w[1]))).collect();
    let last = *arch.hidden.last().unwrap();
    let out_w = l.push(last, 1 + 2 * arch.out_dim);
    let out_b = l.push(1, 1 + 2 * arch.out_dim);
    (l, ImogBlocks { embed, input, bias0, hidden, out_w, out_b })
}

/// Feed-forward map from scanning vectors `(z_i, c)` (and, in conditional mode,
/// a conditioning point) to Gaussian component parameters `(w, m, A)`.
///
/// Heads: `w = exp(B tanh(u_w))`, `m = center + half_width * u_m`,
/// `A = var_floor + s * softplus(u_A)`.
pub struct ImogNetwork<T> {
    arch: ImogArch,
    frame: Frame,
    cond_frame: Option<Frame>,
    layout: Layout,
    blocks: ImogBlocks,
    params: Vec<T>,
}

impl<T: Scalar> Clone for ImogNetwork<T> {
    fn clone(&self) -> Self {
        let (layout, blocks) = imog_layout(&self.arch);
        Self {
            arch: self.arch.clone(),
            frame: self.frame.clone(),
            cond_frame: self.cond_frame.clone(),
            layout,
            blocks,
            params: self.params.clone(),
        }
    }
}

impl<T: Scalar> ImogNetwork<T> {
    /// Seeded initialization. With a data frame, the mean head is calibrated so
    /// that initial means cover the data bounding box.
    pub fn init(arch: ImogArch, frame: Option<Frame>, cond_frame: Option<Frame>) -> Result<Self> {
        if arch.hidden.is_empty() {
            return usage("network needs at least one hidden layer");
        }
        if arch.hidden.contains(&0) || arch.n_components == 0 || arch.out_dim == 0 {
            return usage("layer widths, component count and output dimension must be positive");
        }
        if arch.noise_dim == 0 {
            return usage("noise dimension must be positive");
        }
        if !(arch.var_floor > 0.0) {
            return usage("variance floor must be positive");
        }
        if arch.cond_dim > 0 && cond_frame.as_ref().is_some_and(|f| f.dim() != arch.cond_dim) {
            return usage("conditioning frame has the wrong dimension");
        }
        let calibrate = frame.is_some();
        let frame = frame.unwrap_or_else(|| Frame::identity(arch.out_dim));
        if frame.dim() != arch.out_dim {
            return usage("data frame has the wrong dimension");
        }
        let cond_frame = (arch.cond_dim > 0).then(|| cond_frame.unwrap_or_else(|| Frame::identity(arch.cond_dim)));

        let (layout, blocks) = imog_layout(&arch);
        let mut rng = ChaCha8Rng::seed_from_u64(arch.seed);
        let mut p = vec![0.0f64; layout.total()];
        let s3 = 3f64.sqrt();
        for v in &mut p[blocks.embed.range()] {
            *v = rng.random_range(-s3..s3);
        }
        let h0 = arch.hidden[0];
        p[blocks.input.range()].copy_from_slice(&xavier(&mut rng, blocks.input.rows, h0, blocks.input.len()));
        for (wb, _) in &blocks.hidden {
            p[wb.range()].copy_from_slice(&xavier(&mut rng, wb.rows, wb.cols, wb.len()));
        }
        let ow = blocks.out_w;
        p[ow.range()].copy_from_slice(&xavier(&mut rng, ow.rows, ow.cols, ow.len()));
        // Damp the weight and variance heads so initial components are alike.
        let d = arch.out_dim;
        for r in 0..ow.rows {
            p[ow.offset + r * ow.cols] *= 0.1;
            for k in 0..d {
                p[ow.offset + r * ow.cols + 1 + d + k] *= 0.5;
            }
        }

        let mut net = Self { arch, frame, cond_frame, layout, blocks, params: p.into_iter().map(T::of).collect() };
        if calibrate {
            net.calibrate_mean_head()?;
        }
        Ok(net)
    }

    /// Rescales the mean-head columns so the largest raw output over a probe
    /// grid of scanning inputs equals [`INIT_MEAN_SPAN`].
    fn calibrate_mean_head(&mut self) -> Result<()> {
        let n = self.arch.n_components;
        let dc = self.arch.noise_dim;
        let levels: Vec<T> =
            (0..PROBE_NOISE_LEVELS).map(|k| T::of((k as f64 + 0.5) / PROBE_NOISE_LEVELS as f64)).collect();
        let noise = Tensor::new(levels.len(), dc, levels.iter().flat_map(|&v| std::iter::repeat_n(v, dc)).collect());
        let mut batch = ScanBatch::grid(n, &noise);
        if let Some(cf) = &self.cond_frame {
            let rows = batch.len();
            let mut c = Vec::with_capacity(rows * cf.dim());
            for r in 0..rows {
                let sign = [-1.0, 0.0, 1.0][r % 3];
                c.extend(cf.center.iter().zip(&cf.half_width).map(|(&m, &h)| T::of(m + sign * h)));
            }
            batch.condition = Some(Tensor::new(rows, cf.dim(), c));
        }
        let raw = self.raw_outputs(&batch)?;
        let d = self.arch.out_dim;
        let cols = 1 + 2 * d;
        let (ow, ob) = (self.blocks.out_w, self.blocks.out_b);
        for k in 0..d {
            let col = 1 + k;
            let max = (0..raw.rows()).map(|r| raw.get(r, col).abs()).fold(T::zero(), T::max);
            if max > T::zero() {
                let s = T::of(INIT_MEAN_SPAN) / max;
                for r in 0..ow.rows {
                    let i = ow.offset + r * cols + col;
                    self.params[i] = self.params[i] * s;
                }
                let i = ob.offset + col;
                self.params[i] = self.params[i] * s;
            }
        }
        Ok(())
    }

    pub fn arch(&self) -> &ImogArch {
        &self.arch
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn cond_frame(&self) -> Option<&Frame> {
        self.cond_frame.as_ref()
    }

    pub fn is_conditional(&self) -> bool {
        self.arch.cond_dim > 0
    }

    pub fn n_params(&self) -> usize {
        self.layout.total()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub(crate) fn from_parts(arch: ImogArch, frame: Frame, cond_frame: Option<Frame>, params: Vec<T>) -> Result<Self> {
        let (layout, blocks) = imog_layout(&arch);
        if params.len() != layout.total() {
            return usage(format!("expected {} parameters, found {}", layout.total(), params.len()));
        }
        Ok(Self { arch, frame, cond_frame, layout, blocks, params })
    }

    fn validate(&self, batch: &ScanBatch<T>) -> Result<()> {
        if batch.noise.rows() != batch.len() || batch.noise.cols() != self.arch.noise_dim {
            return usage("noise tensor does not match the batch");
        }
        if let Some(&i) = batch.indices.iter().find(|&&i| i >= self.arch.n_components) {
            return usage(format!("one-hot index {i} out of range"));
        }
        match (&batch.condition, self.arch.cond_dim) {
            (None, 0) => Ok(()),
            (Some(c), d) if d > 0 => {
                if c.rows() != batch.len() || c.cols() != d {
                    return usage("condition tensor does not match the batch");
                }
                Ok(())
            }
            (None, _) => usage("conditional network requires a condition"),
            (Some(_), _) => usage("unconditional network does not accept a condition"),
        }
    }

    fn trunk(&self, gt: &mut GradTape<T>, group: Option<GroupId>, batch: &ScanBatch<T>) -> Result<Var> {
        self.validate(batch)?;
        let p = &self.params;
        let rows = batch.len();
        let width = self.arch.noise_dim + self.arch.cond_dim;
        let mut inp = Vec::with_capacity(rows * width);
        let two = T::of(2.0);
        for r in 0..rows {
            inp.extend(batch.noise.row(r).iter().map(|&c| two * c - T::one()));
            if let (Some(c), Some(f)) = (&batch.condition, &self.cond_frame) {
                f.normalize_into(c.row(r), &mut inp);
            }
        }
        let x = gt.tape.constant(Tensor::new(rows, width, inp));
        let embed = gt.bind(group, p, self.blocks.embed);
        let w_in = gt.bind(group, p, self.blocks.input);
        let b0 = gt.bind(group, p, self.blocks.bias0);
        let e = gt.tape.gather_rows(embed, &batch.indices);
        let pre = gt.tape.matmul(x, w_in);
        let pre = gt.tape.add(pre, e);
        let pre = gt.tape.add_row(pre, b0);
        let mut h = gt.tape.tanh(pre);
        for &(wb, bb) in &self.blocks.hidden {
            let w = gt.bind(group, p, wb);
            let b = gt.bind(group, p, bb);
            let z = gt.tape.matmul(h, w);
            let z = gt.tape.add_row(z, b);
            h = gt.tape.tanh(z);
        }
        let ow = gt.bind(group, p, self.blocks.out_w);
        let ob = gt.bind(group, p, self.blocks.out_b);
        let out = gt.tape.matmul(h, ow);
        Ok(gt.tape.add_row(out, ob))
    }

    fn raw_outputs(&self, batch: &ScanBatch<T>) -> Result<Tensor<T>> {
        let mut gt = GradTape::new();
        let out = self.trunk(&mut gt, None, batch)?;
        Ok(gt.tape.value(out).clone())
    }

    /// Records the forward pass; parameters become leaves of `group`, or
    /// constants when `group` is `None`.
    pub fn forward_tape(
        &self,
        gt: &mut GradTape<T>,
        group: Option<GroupId>,
        batch: &ScanBatch<T>,
    ) -> Result<MixtureHeads> {
        let out = self.trunk(gt, group, batch)?;
        let d = self.arch.out_dim;
        let t = &mut gt.tape;
        let uw = t.slice_cols(out, 0, 1);
        let um = t.slice_cols(out, 1, 1 + d);
        let ua = t.slice_cols(out, 1 + d, 1 + 2 * d);
        let bw = t.tanh(uw);
        let bw = t.scale(bw, T::of(self.arch.weight_bound));
        let w = t.exp(bw);
        let center: Vec<T> = self.frame.center.iter().map(|&v| T::of(v)).collect();
        let half: Vec<T> = self.frame.half_width.iter().map(|&v| T::of(v)).collect();
        let m = t.affine_cols(um, &half, &center);
        let sp = t.softplus(ua);
        let a = t.affine_cols(sp, &self.var_scale(), &vec![T::of(self.arch.var_floor); d]);
        Ok(MixtureHeads { w, m, a })
    }

    fn var_scale(&self) -> Vec<T> {
        self.frame.half_width.iter().map(|&h| T::of((INIT_SD_FRACTION * h).powi(2) / std::f64::consts::LN_2)).collect()
    }

    /// Component parameters for a whole batch, without gradients.
    pub fn forward_batch(&self, batch: &ScanBatch<T>) -> Result<(Vec<T>, Tensor<T>, Tensor<T>)> {
        let mut gt = GradTape::new();
        let h = self.forward_tape(&mut gt, None, batch)?;
        Ok((gt.tape.value(h.w).data().to_vec(), gt.tape.value(h.m).clone(), gt.tape.value(h.a).clone()))
    }

    /// `(w, m, A)` for a single scanning input.
    pub fn forward(&self, input: &ScanInput<T>, condition: Option<&[T]>) -> Result<(T, Vec<T>, Vec<T>)> {
        if input.noise.iter().any(|&c| !(c >= T::zero() && c < T::one())) {
            return usage("scan noise must lie in [0, 1)");
        }
        let batch = ScanBatch {
            indices: vec![input.one_hot_index],
            noise: Tensor::new(1, input.noise.len(), input.noise.clone()),
            condition: condition.map(|c| Tensor::new(1, c.len(), c.to_vec())),
        };
        let (w, m, a) = self.forward_batch(&batch)?;
        Ok((w[0], m.row(0).to_vec(), a.row(0).to_vec()))
    }

    /// Finite mixture of all `N × M'` scan components for the given noise rows,
    /// each weighted by `w / (N M')`.
    pub fn freeze(&self, noise: &Tensor<T>) -> Result<FiniteMixture<T>> {
        self.freeze_batch(ScanBatch::grid(self.arch.n_components, noise))
    }

    /// Conditional counterpart of [`ImogNetwork::freeze`]: the mixture over `y` given `x`.
    pub fn freeze_conditional(&self, x: &[T], noise: &Tensor<T>) -> Result<FiniteMixture<T>> {
        let mut batch = ScanBatch::grid(self.arch.n_components, noise);
        let rows = batch.len();
        batch.condition = Some(Tensor::new(rows, x.len(), x.iter().copied().cycle().take(rows * x.len()).collect()));
        self.freeze_batch(batch)
    }

    fn freeze_batch(&self, batch: ScanBatch<T>) -> Result<FiniteMixture<T>> {
        let n = T::from_usize_lossy(batch.len());
        let (w, m, a) = self.forward_batch(&batch)?;
        let comps = (0..batch.len())
            .map(|r| GaussianComponent::new(w[r] / n, m.row(r).to_vec(), a.row(r).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        FiniteMixture::new(comps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

struct Mlp {
    layers: Vec<(Block, Block)>,
    layout: Layout,
}

impl Mlp {
    fn new(arch: &MlpArch) -> Self {
        let mut layout = Layout::default();
        let mut dims = vec![arch.in_dim];
        dims.extend(&arch.hidden);
        dims.push(arch.out_dim);
        let layers = dims.windows(2).map(|w| (layout.push(w[0], w[1]), layout.push(1, w[1]))).collect();
        Self { layers, layout }
    }

    fn init(&self, seed: u64, last_scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.layout.total()];
        let last = self.layers.len() - 1;
        for (li, (wb, _)) in self.layers.iter().enumerate() {
            let s = if li == last { last_scale } else { 1.0 };
            for (dst, v) in p[wb.range()].iter_mut().zip(xavier(&mut rng, wb.rows, wb.cols, wb.len())) {
                *dst = v * s;
            }
        }
        p
    }

    /// Affine layers with tanh between them; the last layer is linear.
    fn forward<T: Scalar>(&self, gt: &mut GradTape<T>, group: Option<GroupId>, params: &[T], x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (li, &(wb, bb)) in self.layers.iter().enumerate() {
            let w = gt.bind(group, params, wb);
            let b = gt.bind(group, params, bb);
            let z = gt.tape.matmul(h, w);
            h = gt.tape.add_row(z, b);
            if li < last {
                h = gt.tape.tanh(h);
            }
        }
        h
    }
}

fn check_hidden(hidden: &[usize]) -> Result<()> {
    if hidden.is_empty() {
        return usage("network needs at least one hidden layer");
    }
    if hidden.contains(&0) {
        return usage("zero-width hidden layer");
    }
    Ok(())
}

/// Positive scalar-output network `T(x) = exp(B tanh(u(x) / B))`, used as a
/// probability-ratio model and as the adversarial discriminator.
pub struct RatioNetwork<T> {
    arch: MlpArch,
    frame: Frame,
    mlp: Mlp,
    params: Vec<T>,
}

/// Saturation bound on the log output of [`RatioNetwork`].
pub const RATIO_LOG_BOUND: f64 = 30.0;

impl<T: Scalar> Clone for RatioNetwork<T> {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            frame: self.frame.clone(),
            mlp: Mlp::new(&self.arch),
            params: self.params.clone(),
        }
    }
}

impl<T: Scalar> RatioNetwork<T> {
    pub fn init(in_dim: usize, hidden: Vec<usize>, seed: u64, frame: Option<Frame>) -> Result<Self> {
        check_hidden(&hidden)?;
        if in_dim == 0 {
            return usage("input dimension must be positive");
        }
        let frame = frame.unwrap_or_else(|| Frame::identity(in_dim));
        if frame.dim() != in_dim {
            return usage("data frame has the wrong dimension");
        }
        let arch = MlpArch { in_dim, out_dim: 1, hidden, seed };
        let mlp = Mlp::new(&arch);
        let params = mlp.init(seed, 0.1).into_iter().map(T::of).collect();
        Ok(Self { arch, frame, mlp, params })
    }

    pub(crate) fn from_parts(arch: MlpArch, frame: Frame, params: Vec<T>) -> Result<Self> {
        let mlp = Mlp::new(&arch);
        if params.len() != mlp.layout.total() {
            return usage(format!("expected {} parameters, found {}", mlp.layout.total(), params.len()));
        }
        Ok(Self { arch, frame, mlp, params })
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn n_params(&self) -> usize {
        self.mlp.layout.total()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Records `T(x)` for every row of `x` (n×1 output). `x` is a tape node in
    /// data coordinates, so gradients can flow into it.
    pub fn forward_var(&self, gt: &mut GradTape<T>, group: Option<GroupId>, x: Var) -> Var {
        let scale: Vec<T> = self.frame.half_width.iter().map(|&h| T::one() / T::of(h)).collect();
        let shift: Vec<T> =
            self.frame.center.iter().zip(&self.frame.half_width).map(|(&c, &h)| T::of(-c / h)).collect();
        let xn = gt.tape.affine_cols(x, &scale, &shift);
        let u = self.mlp.forward(gt, group, &self.params, xn);
        let bound = T::of(RATIO_LOG_BOUND);
        let s = gt.tape.scale(u, T::one() / bound);
        let s = gt.tape.tanh(s);
        let s = gt.tape.scale(s, bound);
        gt.tape.exp(s)
    }

    pub fn forward_tape(&self, gt: &mut GradTape<T>, group: Option<GroupId>, x: &PointSet<T>) -> Result<Var> {
        if x.dim() != self.arch.in_dim {
            return usage("input dimension mismatch");
        }
        let xv = gt.tape.constant(Tensor::new(x.len(), x.dim(), x.as_slice().to_vec()));
        Ok(self.forward_var(gt, group, xv))
    }

    /// `T(x)` for every point.
    pub fn eval(&self, x: &PointSet<T>) -> Result<Vec<T>> {
        let mut gt = GradTape::new();
        let v = self.forward_tape(&mut gt, None, x)?;
        Ok(gt.tape.value(v).data().to_vec())
    }
}

/// Noise-pushforward generator `x = center + half_width * u(z)`, `z ~ N(0, I)`.
pub struct Generator<T> {
    arch: MlpArch,
    frame: Frame,
    mlp: Mlp,
    params: Vec<T>,
}

impl<T: Scalar> Clone for Generator<T> {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            frame: self.frame.clone(),
            mlp: Mlp::new(&self.arch),
            params: self.params.clone(),
        }
    }
}

impl<T: Scalar> Generator<T> {
    pub fn init(noise_dim: usize, out_dim: usize, hidden: Vec<usize>, seed: u64, frame: Option<Frame>) -> Result<Self> {
        check_hidden(&hidden)?;
        if noise_dim == 0 || out_dim == 0 {
            return usage("generator dimensions must be positive");
        }
        let frame = frame.unwrap_or_else(|| Frame::identity(out_dim));
        if frame.dim() != out_dim {
            return usage("data frame has the wrong dimension");
        }
        let arch = MlpArch { in_dim: noise_dim, out_dim, hidden, seed };
        let mlp = Mlp::new(&arch);
        let params = mlp.init(seed, 1.0).into_iter().map(T::of).collect();
        Ok(Self { arch, frame, mlp, params })
    }

    pub(crate) fn from_parts(arch: MlpArch, frame: Frame, params: Vec<T>) -> Result<Self> {
        let mlp = Mlp::new(&arch);
        if params.len() != mlp.layout.total() {
            return usage(format!("expected {} parameters, found {}", mlp.layout.total(), params.len()));
        }
        Ok(Self { arch, frame, mlp, params })
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn n_params(&self) -> usize {
        self.mlp.layout.total()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn forward_tape(&self, gt: &mut GradTape<T>, group: Option<GroupId>, z: &Tensor<T>) -> Result<Var> {
        if z.cols() != self.arch.in_dim {
            return usage("generator noise dimension mismatch");
        }
        let zv = gt.tape.constant(z.clone());
        let u = self.mlp.forward(gt, group, &self.params, zv);
        let center: Vec<T> = self.frame.center.iter().map(|&v| T::of(v)).collect();
        let half: Vec<T> = self.frame.half_width.iter().map(|&v| T::of(v)).collect();
        Ok(gt.tape.affine_cols(u, &half, &center))
    }

    pub fn generate(&self, z: &Tensor<T>) -> Result<PointSet<T>> {
        let mut gt = GradTape::new();
        let v = self.forward_tape(&mut gt, None, z)?;
        PointSet::new(self.arch.out_dim, gt.tape.value(v).data().to_vec())
    }
}
