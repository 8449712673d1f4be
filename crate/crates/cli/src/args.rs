//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poc_core::eval::Matching;
use poc_core::graph::Schema;
use poc_core::Method;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "pocdetect", version, about = "Point-of-compromise detection pipeline")]
pub struct Cli {
    /// key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic transaction corpus.
    Generate(GenerateArgs),
    /// Inject compromised terminal-weeks into a corpus.
    Inject(InjectArgs),
    /// Build the candidate graph from a transaction CSV.
    Ingest(IngestArgs),
    /// Run the detector on a graph snapshot.
    Detect(DetectArgs),
    /// Rank locations with a baseline method.
    Baseline(BaselineArgs),
    /// Score methods against injected ground truth.
    Eval(EvalArgs),
    /// Replay the weekly card-reissue policy.
    Savings(SavingsArgs),
    /// Time engine iterations over graph sizes and worker counts.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Inject(_) => "inject",
            Command::Ingest(_) => "ingest",
            Command::Detect(_) => "detect",
            Command::Baseline(_) => "baseline",
            Command::Eval(_) => "eval",
            Command::Savings(_) => "savings",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SchemaArgs {
    #[arg(long, default_value = "card_id")]
    pub card_column: String,
    #[arg(long, default_value = "terminal_id")]
    pub terminal_column: String,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    #[arg(long, default_value = "amount")]
    pub amount_column: String,
    #[arg(long, default_value = "is_fraud")]
    pub fraud_column: String,
}

impl SchemaArgs {
    pub fn schema(&self) -> Schema {
        Schema {
            card_id: self.card_column.clone(),
            terminal_id: self.terminal_column.clone(),
            timestamp: self.timestamp_column.clone(),
            amount: self.amount_column.clone(),
            is_fraud: self.fraud_column.clone(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PriorArgs {
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BpArgs {
    /// Linearized belief propagation coupling.
    #[arg(long, default_value_t = poc_core::baselines::DEFAULT_COUPLING)]
    pub coupling: f64,
    /// Fail instead of lowering an unsafe coupling.
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub cards: usize,
    #[arg(long, default_value_t = 2_000)]
    pub terminals: usize,
    #[arg(long, default_value_t = 26)]
    pub weeks: usize,
    /// Mean transactions per card over the whole period.
    #[arg(long, default_value_t = 60.0)]
    pub tx_per_card: f64,
    /// Zipf exponent of terminal popularity.
    #[arg(long, default_value_t = 1.0)]
    pub popularity: f64,
    #[arg(long, default_value_t = 8)]
    pub favorites: usize,
    #[arg(long, default_value_t = 0.6)]
    pub favorite_share: f64,
    #[arg(long, default_value_t = 20)]
    pub regions: usize,
    /// Week index (Monday-based, since 1970-01-05) of the first week.
    #[arg(long, default_value_t = 2_296)]
    pub start_week: i64,
}

#[derive(Debug, Args, Serialize)]
pub struct InjectArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long)]
    pub seed: u64,
    /// Per-transaction steal probability at injected buckets.
    #[arg(long = "p", default_value_t = 0.1)]
    pub steal_probability: f64,
    /// Extra clean fraud-cards as a multiple of the stolen count.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub pocs: usize,
    /// Distinct cards a bucket needs to be eligible for injection.
    #[arg(long, default_value_t = 20)]
    pub min_poc_cards: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long, default_value_t = 5)]
    pub min_fraud_cards: usize,
    /// Skip malformed rows instead of aborting.
    #[arg(long)]
    pub skip_bad_rows: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "SNAPSHOT")]
    pub graph: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, env = "POCDETECT_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Also write per-edge blames.
    #[arg(long)]
    pub blames: bool,
    /// Omit blames below this value from the blames file.
    #[arg(long, default_value_t = 0.0)]
    pub min_blame: f64,
    /// Exit with status 3 when the iteration limit is hit.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "SNAPSHOT")]
    pub graph: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    #[command(flatten)]
    pub bp: BpArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum MatchingArg {
    Strict,
    AdjacentWeek,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Strict => Matching::Strict,
            MatchingArg::AdjacentWeek => Matching::AdjacentWeek,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "SNAPSHOT")]
    pub graph: PathBuf,
    /// Ground truth JSON written by `inject`.
    #[arg(long, value_name = "JSON")]
    pub truth: PathBuf,
    /// Methods to score; repeat or separate with commas. Defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub bp: BpArgs,
    #[arg(long, value_enum, default_value_t = MatchingArg::Strict)]
    pub matching: MatchingArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SavingsArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// First decision week; defaults to the week after the earliest transaction.
    #[arg(long)]
    pub from_week: Option<i64>,
    /// Last decision week; defaults to the week after the latest transaction.
    #[arg(long)]
    pub to_week: Option<i64>,
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Reissue cost per card, minor units.
    #[arg(long, default_value_t = 1_000)]
    pub cost: u64,
    #[arg(long, default_value_t = 5)]
    pub min_fraud_cards: usize,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
    /// Edge counts of the generated graphs.
    #[arg(long, value_delimiter = ',', default_values_t = [100_000usize, 300_000, 1_000_000, 3_000_000])]
    pub edges: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    pub workers: Vec<usize>,
    /// Iterations timed per run.
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Runs per configuration; the fastest is kept.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}
