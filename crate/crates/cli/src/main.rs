use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use auprc_core::simlab::DistKind;
use auprc_core::trainer::AuxGradient;
use auprc_core::{LrSchedule, ModelKind};

/// Stochastic AUPRC optimization: training, evaluation and simulation studies.
#[derive(Debug, Parser)]
#[command(name = "auprc", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Directory for output files.
    #[arg(long, global = true, env = "AUPRC_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for simulation repeats (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Also write tables as JSON (eval prints JSON instead of text).
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a scorer on a labelled CSV dataset.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and report metrics.
    Eval(EvalArgs),
    /// Run one of the simulation studies.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Write a synthetic dataset.
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV: label (+1/-1) then features, optional header line.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation CSV; the training set is used when absent.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Moving-average rate for the auxiliary vector.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub npos: Option<usize>,
    #[arg(long)]
    pub nneg: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning-rate schedule, e.g. constant:0.05, inverse:2 or pl:1.
    #[arg(long)]
    pub lr: Option<LrSchedule>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Prior used by the estimator instead of the training-set ratio.
    #[arg(long)]
    pub prior: Option<f64>,
    /// Validation AUPRC every this many iterations (0 disables).
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long, value_parser = parse_aux_gradient)]
    pub aux_gradient: Option<AuxGradient>,
    #[arg(long, value_parser = parse_model_kind)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Prior for the metrics; the dataset's own ratio when absent.
    #[arg(long)]
    pub prior: Option<f64>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Write the precision-recall curve to this CSV.
    #[arg(long)]
    pub pr_curve: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Bias of the proposed and AP estimators against the full-set risk.
    Bias(BiasArgs),
    /// Error of reconstructing the positive scores from a batch.
    Interp(InterpArgs),
    /// Bias decay and variance of the moving average.
    Ema(EmaArgs),
    /// Leave-one-out parameter distance against dataset size.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Score distribution: binormal, bibeta or offset_uniform.
    #[arg(long)]
    pub dist: Option<DistKind>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    /// Positive fraction of the population.
    #[arg(long)]
    pub pi: Option<f64>,
    /// Positive fraction of each batch.
    #[arg(long)]
    pub pi0: Option<f64>,
    /// Comma-separated total batch sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Let v evolve by the moving average at this rate instead of fixing it.
    #[arg(long, requires = "coupled_steps")]
    pub coupled_beta: Option<f64>,
    #[arg(long, requires = "coupled_beta")]
    pub coupled_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InterpArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    /// Comma-separated batch sizes n.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Size of the positive population being reconstructed.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmaArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub reference_draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Comma-separated dataset sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub perturbations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training iterations per run.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Two Gaussian blobs in the plane.
    Blobs(BlobArgs),
}

#[derive(Debug, Args)]
pub struct BlobArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub pi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File name inside the output directory.
    #[arg(long, default_value = "blobs.csv")]
    pub name: String,
}

fn parse_aux_gradient(s: &str) -> Result<AuxGradient, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown mode {s:?}; valid modes: stop, through_echo, compositional"))
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown model {s:?}; valid models: linear, mlp1"))
}

/// Failures mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files: exit 2.
    Usage(String),
    /// Divergence or another numerical breakdown: exit 3.
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<auprc_core::Error> for CliError {
    fn from(e: auprc_core::Error) -> Self {
        use auprc_core::Error as E;
        match e {
            E::Divergence { .. } | E::Monotonicity(_) | E::Range { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
