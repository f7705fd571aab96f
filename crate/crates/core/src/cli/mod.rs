//! The `sgm` command line.
//!
//! Every subcommand writes `manifest.json`, `telemetry.csv` and `result.json`
//! into `--out`. Exit codes: 0 success, 1 usage or input error, 2 numerical abort.

mod commands;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Result, SgmError};
use crate::trainer::{Mode, Optimizer, TrainConfig};

pub use output::{InputHash, Manifest, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "sgm", version, about = "Renyi-2 structured generative models for Gaussian mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset and its generator spec.
    GenData(GenDataArgs),
    /// Fit an unconditional density (SGM or EM baseline).
    TrainDensity(TrainDensityArgs),
    /// Fit a conditional density g(y|x) (SGM or EM baseline).
    TrainConditional(TrainConditionalArgs),
    /// Estimate mutual information between two blocks of columns.
    EstimateMi(EstimateMiArgs),
    /// Train a 2-D generator against a ratio discriminator.
    TrainGan2d(TrainGanArgs),
    /// Score a trained model on data.
    Eval(EvalArgs),
    /// Reference values of a generator spec by quadrature.
    Oracle(OracleArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    /// 20-center Gaussian mixture in 2-D.
    Mog,
    /// 20 centers of mixed Gaussian, Laplace and uniform families in 2-D.
    Generalized,
    /// Ten-state continuous Markov chain, as (x_t, x_t+1) pairs.
    Markov,
    Moons,
    Ring,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sgm,
    Em,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    /// Renyi-2 entropy in nats.
    H2,
    /// Quadratic mutual information in bits.
    Qmi,
    /// sqrt of the integral of p², the supremum of J_p.
    CeBound,
    /// log of the integral of p_xy²/(p_x p_y), in nats.
    RenyiMi,
    /// Integral of p²(y|x) p(x) with x uniform on the state space.
    ConditionalNorm,
}

#[derive(Args, Debug, Clone)]
pub struct OutDir {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Training hyperparameters. Flags override `--config`, which overrides the defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// JSON file with any subset of the training keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of scanning indices N.
    #[arg(long)]
    pub n_components: Option<usize>,
    /// Minibatch size M.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Data rows per step for the density numerator.
    #[arg(long)]
    pub data_batch: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub var_floor: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub noise_dim: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub freeze_draws: Option<usize>,
    #[arg(long)]
    pub disc_steps: Option<usize>,
}

fn parse_optimizer(s: &str) -> std::result::Result<Optimizer, String> {
    match s {
        "ascent" => Ok(Optimizer::Ascent),
        "adam" => Ok(Optimizer::Adam),
        _ => Err(format!("unknown optimizer '{s}' (expected ascent or adam)")),
    }
}

impl TrainFlags {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self, mode: Mode) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| SgmError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<TrainConfig>(&text)
                    .map_err(|e| SgmError::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(
            seed,
            n_components,
            batch_size,
            learning_rate,
            beta1,
            beta2,
            steps,
            var_floor,
            hidden,
            noise_dim,
            optimizer,
            freeze_draws,
            disc_steps
        );
        if self.data_batch.is_some() {
            cfg.data_batch = self.data_batch;
        }
        cfg.mode = mode;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample count (mixture kinds, moons, ring).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Markov chain starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Markov trajectory length.
    #[arg(long)]
    pub length: Option<usize>,
    /// Jitter for moons and ring.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct BaselineFlags {
    #[arg(long, value_enum, default_value_t = Method::Sgm)]
    pub method: Method,
    /// EM component count; defaults to the spec's center count, else 20.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub em_iters: usize,
    /// Generator spec (for the EM default K).
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainDensityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub baseline: BaselineFlags,
    /// Also write the fitted density on a grid of this many points per axis (2-D only).
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct TrainConditionalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub x_dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub y_dims: Vec<usize>,
    #[command(flatten)]
    pub baseline: BaselineFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateMiArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub x_dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub y_dims: Vec<usize>,
    /// Sample sizes for an MI-versus-samples series (leading rows of the data).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// In-distribution probe points for the discriminator AUROC.
    #[arg(long, requires = "probe_out")]
    pub probe_in: Option<PathBuf>,
    /// Out-of-distribution probe points.
    #[arg(long, requires = "probe_in")]
    pub probe_out: Option<PathBuf>,
    /// Generated points written to samples.csv.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Checkpoint (SGM) or mixture JSON (EM).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Generator spec supplying the true centers (mixture) or transitions (Markov).
    #[arg(long, alias = "centers")]
    pub spec: Option<PathBuf>,
    /// Conditioning columns; switches to conditional evaluation.
    #[arg(long, value_delimiter = ',')]
    pub x_dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub y_dims: Option<Vec<usize>>,
    /// Noise draws per index when freezing an SGM checkpoint
    /// [default: 100 for densities, 4 for conditionals].
    #[arg(long)]
    pub freeze_draws: Option<usize>,
    /// Seed of the freezing noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Most pairs used for conditional evaluation, taken at evenly spaced rows.
    #[arg(long, default_value_t = 1000)]
    pub max_pairs: usize,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    #[arg(long, default_value_t = 1000)]
    pub resolution: usize,
    #[command(flatten)]
    pub out: OutDir,
}

/// Exit code for an error.
pub fn exit_code(e: &SgmError) -> i32 {
    match e {
        SgmError::Usage(_) | SgmError::Io(_) | SgmError::Format(_) => EXIT_USAGE,
        SgmError::Numerical { .. } | SgmError::Degenerate(_) | SgmError::Quadrature(_) | SgmError::ForeignVariable => {
            EXIT_NUMERICAL
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
