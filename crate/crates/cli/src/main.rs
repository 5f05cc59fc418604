//! `tspe`: pool/prompt generation, curation, evaluation, sweeps and reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;
use tspe_core::ensemble::AveragingMode;
use tspe_core::eval::Condition;
use tspe_core::taxonomy::CategoryId;

#[derive(Parser, Debug)]
#[command(name = "tspe", version, about = "Task-specific prompt ensembles for zero-shot audio classification")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for the embedding cache (in-memory when omitted).
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-clip work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Debug-level logs.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate pool files or prompt candidates.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Filter candidates into a K-prompt set.
    Curate(CurateArgs),
    /// Zero-shot evaluation of one dataset under one condition.
    Eval(EvalArgs),
    /// TSPE accuracy as a function of K.
    Ablate(AblateArgs),
    /// Table of every report.json under a directory.
    Report(ReportArgs),
    /// Accuracy delta between a vanilla and a TSPE report.
    Compare(CompareArgs),
    /// Write a dataset's manifest from its distributed layout.
    Prepare(PrepareArgs),
    /// Write a synthetic tone dataset for the planted mock backend.
    Synth(SynthArgs),
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    Pools(GenPoolsArgs),
    Prompts(GenPromptsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenBackend {
    Offline,
    Remote,
}

fn parse_category(s: &str) -> Result<CategoryId, String> {
    s.parse().map_err(|e: tspe_core::taxonomy::TaxonomyError| e.to_string())
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: tspe_core::eval::EvalError| e.to_string())
}

#[derive(Args, Debug)]
pub struct GenPoolsArgs {
    #[arg(long, value_enum, default_value = "offline")]
    pub backend: GenBackend,
    /// Attribute count; sources make up the rest of the 60 terms.
    #[arg(long, default_value_t = 30)]
    pub attributes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenPromptsArgs {
    #[arg(long, value_parser = parse_category)]
    pub category: CategoryId,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "offline")]
    pub backend: GenBackend,
    /// Pool file (default: shipped pools).
    #[arg(long)]
    pub pools: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReviewMode {
    Interactive,
    Auto,
}

#[derive(Args, Debug)]
pub struct CurateArgs {
    #[arg(long, value_parser = parse_category)]
    pub category: CategoryId,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "interactive")]
    pub mode: ReviewMode,
    /// Candidate file (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rule file (default: shipped rules).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Name recorded in the prompt set.
    #[arg(long)]
    pub reviewer: Option<String>,
    /// Label used to show each candidate as a full sentence.
    #[arg(long)]
    pub preview_label: Option<String>,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    #[arg(long)]
    pub dataset: String,
    /// Dataset root (default: from config, or the --taxonomy file's directory).
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Taxonomy file (default: shipped taxonomy).
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// mock, mock-planted, msclap2022 or msclap2023.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, value_enum, default_value = "normalize-then-average")]
    pub averaging: Averaging,
    /// Run directory (default: <output_dir>/<dataset>-<backend>-<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    NormalizeThenAverage,
    AverageThenNormalize,
}

impl From<Averaging> for AveragingMode {
    fn from(a: Averaging) -> Self {
        match a {
            Averaging::NormalizeThenAverage => AveragingMode::NormalizeThenAverage,
            Averaging::AverageThenNormalize => AveragingMode::AverageThenNormalize,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_parser = parse_condition)]
    pub condition: Option<Condition>,
    /// Prompt set file, or `shipped` for the bundled set of the dataset's category.
    #[arg(long)]
    pub promptset: Option<String>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30])]
    pub ks: Vec<usize>,
    /// Candidate file (default: shipped candidates of the dataset's category).
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub vanilla: PathBuf,
    #[arg(long)]
    pub tspe: PathBuf,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub root: PathBuf,
    /// Manifest path (default: the taxonomy's manifest path under the root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset whose category and labels the synthetic classes borrow.
    #[arg(long, default_value = "VocalSound")]
    pub source: String,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    /// Total clips across all classes.
    #[arg(long, default_value_t = 100)]
    pub clips: usize,
    #[arg(long, default_value_t = 0.25)]
    pub seconds: f64,
}

fn init_logging(verbose: bool) {
    let default = if verbose { "debug" } else { "info" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_target(false)
        .try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tspe: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
