use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mkalloc", version, about = "Fit market-response models and allocate marketing budgets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a response model from a history CSV
    Fit(FitArgs),
    /// Allocate a budget (or an ROI target) across segments
    Allocate(AllocateArgs),
    /// Seeded synthetic experiments
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Predict shares and sales on a cost grid
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub history: PathBuf,
    /// Segments file supplying market sizes D
    #[arg(long, required_unless_present = "d_from_max", conflicts_with = "d_from_max")]
    pub segments: Option<PathBuf>,
    /// Approximate D by the largest sales seen for each segment
    #[arg(long)]
    pub d_from_max: bool,
    /// Fit an independent logit per segment instead of the shared network
    #[arg(long)]
    pub baseline: bool,
    /// Leading fraction of history rows (file order) used for training
    #[arg(long, default_value_t = 1.0)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mini-batch size; full batch when absent
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report with losses and held-out RMAE
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Continuous solve, then knapsack over the bracketing options
    TwoStep,
    /// Knapsack over every option
    Direct,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long, required_unless_present = "roi", conflicts_with = "roi", allow_negative_numbers = true)]
    pub budget: Option<f64>,
    /// Minimum sales per unit of spend
    #[arg(long, allow_negative_numbers = true)]
    pub roi: Option<f64>,
    /// Restrict costs to each segment's options
    #[arg(long)]
    pub discrete: bool,
    #[arg(long, value_enum, default_value_t = StrategyArg::TwoStep, requires = "discrete")]
    pub strategy: StrategyArg,
    /// Bisection interval tolerance on the multiplier
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    /// Early stop once the objective gap falls below this fraction of total market size
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon_prime: f64,
    /// JSON report; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-segment CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Iteration counts of the bisection on random scenarios
    Converge(ConvergeArgs),
    /// Objective error and budget overrun under biased parameters
    Sensitivity(SensitivityArgs),
    /// Error bound of discrete allocation against option spacing
    DiscreteError(DiscreteErrorArgs),
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of scenarios, seeded seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub epsilon_prime: f64,
    /// Trace CSV of the bracket per iteration
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 20190804)]
    pub seed: u64,
    /// Comma-separated bias levels
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.025, 0.05, 0.1, 0.15, 0.2])]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Exit with status 4 when a threshold is violated
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct DiscreteErrorArgs {
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 20190804)]
    pub seed: u64,
    /// Comma-separated option spacings
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0])]
    pub distances: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub segments: PathBuf,
    /// Costs as `c1,c2,...` or `lo:step:hi`; empty for none
    #[arg(long, allow_hyphen_values = true)]
    pub cost_grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
