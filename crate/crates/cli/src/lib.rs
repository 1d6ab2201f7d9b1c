//! `stripe` command-line front end.
//!
//! Every run writes a `run.json` record next to its primary output: the
//! resolved configuration, the seed and the inputs, which together
//! determine every output file.

mod commands;
mod error;
pub mod overlay;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "stripe",
    version,
    about = "Stripe-like space target synthesis, detection and label evolution"
)]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labelled dataset.
    Generate(GenerateArgs),
    /// Segment frames with a configured detector.
    Detect(DetectArgs),
    /// Score predicted masks against reference masks.
    Evaluate(EvaluateArgs),
    /// Run teacher-student label evolution over a point-labelled pool.
    Evolve(EvolveArgs),
    /// Train the linear pixel classifier on reference masks.
    Train(TrainArgs),
    /// Render a detection overlay.
    Inspect(InspectArgs),
    /// Evaluate the combined geometric + dice loss on one pair.
    LossCheck(LossCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for stripe_core::synth::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    MatchedFilter,
    Hough,
    Lite,
    External,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory of frames, or a dataset root (see --split).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Segmenter description (TOML with a `kind` key); overrides --method.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "matched-filter")]
    pub method: Method,
    /// Model file for the lite method.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Command template for the external method.
    #[arg(long)]
    pub command: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Keep only the region selected by each frame's point label.
    #[arg(long)]
    pub prompted: bool,
    #[arg(long, default_value_t = stripe_core::detect::DEFAULT_PROMPT_RADIUS)]
    pub radius: f64,
    /// Also write probability maps as 16-bit PGM.
    #[arg(long)]
    pub save_prob: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingPolicy {
    /// Score only frames that have a prediction.
    Skip,
    /// Score frames without a prediction as empty predictions.
    Empty,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub report: ReportFormat,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "skip")]
    pub missing: MissingPolicy,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Point-labelled frames, or a dataset root (see --split).
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Never read reference masks (history then carries no Dice).
    #[arg(long)]
    pub no_gt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Geodice,
    Dice,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Training configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from an existing model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub label: PathBuf,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// Probability map (PGM or PNG, values in [0, 1]).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub label: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Compare the analytic gradient with central differences at this many
    /// randomly chosen pixels.
    #[arg(long, default_value_t = 0)]
    pub fd_pixels: usize,
    /// JSON result file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 runtime or stall.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Where a run record goes: `<dir>/run.json` for directory outputs,
/// `<stem>.run.json` beside file outputs.
pub fn run_record_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("run.json")
    } else {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        out.with_file_name(format!("{stem}.run.json"))
    }
}
