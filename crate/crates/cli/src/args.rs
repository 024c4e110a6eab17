use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qdev", version, about = "Deviation bounds and trajectory checks for quantum Markov semigroups")]
pub struct Cli {
    /// Worker threads for ensembles and rate grids (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Base seed; falls back to QDEV_SEED.
    #[arg(long, global = true, env = "QDEV_SEED")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write model files from built-in templates.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Deviation exponent and finite-time bound.
    Bound(BoundArgs),
    /// Rate function on a grid (KMS-symmetric generators only).
    Rate(RateArgs),
    /// Monte Carlo ensemble of trajectories.
    Simulate(SimulateArgs),
    /// Simulate and check that the bound dominates the empirical tail.
    Compare(SimulateArgs),
    /// Spectral gap, symmetry checks and functional inequalities.
    Inequalities(InequalityArgs),
    /// Concentration bounds from a JSON description.
    Concentrate(ConcentrateArgs),
    /// Built-in reference fixtures.
    Check(CheckArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelAction {
    New(ModelNewArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Template {
    Depolarizing,
    Classical,
    Tensor,
    HeatBath,
    #[value(alias = "appendix-b")]
    Counterexamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CounterexampleChannel {
    Phi,
    Psi,
    PsiTilde,
    PChannel,
}

#[derive(Debug, Args)]
pub struct ModelNewArgs {
    pub template: Template,
    /// Hilbert-space dimension for depolarizing and tensor factors.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Diagonal of σ for the depolarizing template (default: maximally mixed).
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Real rate matrix (JSON nested rows) for the classical template.
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// Number of depolarizing factors for the tensor template.
    #[arg(long, default_value_t = 2)]
    pub factors: usize,
    /// Inverse temperature for the heat-bath template.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = CounterexampleChannel::Psi)]
    pub which: CounterexampleChannel,
    /// Also write the stationary state here.
    #[arg(long)]
    pub state_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; a manifest is written next to it. Default: stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub setup: PathBuf,
    /// Initial state (default: the stationary state).
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Deviation thresholds, one per channel.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub r: Vec<f64>,
    /// Times at which to evaluate the bound.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub t: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid point as a comma list; repeat for more points.
    #[arg(long = "s", allow_negative_numbers = true)]
    pub points: Vec<String>,
    /// Single-channel grid lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Checkpoint times (default: t_max).
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<f64>>,
    /// Thresholds, one per channel; "-inf" disables a channel.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub r: Vec<f64>,
    /// Report the linear-SDE martingale Z(t) instead of tails (simulate only).
    #[arg(long)]
    pub linear: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct InequalityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// State for the entropy, Fisher information and transport checks.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Known log-Sobolev constant α₂.
    #[arg(long)]
    pub lsi: Option<f64>,
    /// Known transport constant C (overrides the one implied by --lsi).
    #[arg(long)]
    pub ti: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConcentrateArgs {
    /// JSON object with a "variant" field.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub r: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// The acceptance fixtures.
    #[value(alias = "paper-fixtures")]
    Reference,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Random states per fixture in the inequality chain.
    #[arg(long, default_value_t = 100)]
    pub states: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}
