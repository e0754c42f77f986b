//! `semimatch`: command-line experiments.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semimatch::data::ShapeVariant;
use semimatch::Guesser;

use crate::config::DataKind;

/// A mistake in the invocation or the configuration (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "semimatch", version, about = "Semi-supervised training with triplet MI and template matching")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write report.csv, report.json and a checkpoint.
    Train(TrainArgs),
    /// Paired runs of the template-matching and confidence-threshold guessers.
    CompareGuessers(RunArgs),
    /// Paired unsupervised runs of the triplet and single-pair MI losses.
    CompareMi(RunArgs),
    /// Generate a synthetic dataset file.
    GenData(GenArgs),
    /// Evaluate a checkpoint's EMA model on the test split.
    Eval(EvalArgs),
}

/// Config file plus the overrides shared by every run command; flags win.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub data: Option<DataKind>,
    #[arg(long)]
    pub labels_per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub guesser: Option<GuesserArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Labeled data only, no unlabeled views (the supervised baseline).
    #[arg(long)]
    pub supervised: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier `train`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum GuesserArg {
    Dtm,
    Confidence,
    None,
}

impl From<GuesserArg> for Guesser {
    fn from(g: GuesserArg) -> Self {
        match g {
            GuesserArg::Dtm => Guesser::Dtm,
            GuesserArg::Confidence => Guesser::Confidence,
            GuesserArg::None => Guesser::None,
        }
    }
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum GenKind {
    Shapes,
    Blobs,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum VariantArg {
    Border,
    Fill,
}

impl From<VariantArg> for ShapeVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Border => ShapeVariant::BorderColor,
            VariantArg::Fill => ShapeVariant::FillColor,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image side (shapes).
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Class count (blobs).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Feature dimension (blobs).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Minimum distance between cluster centers (blobs).
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run configuration; defaults to config.toml next to the checkpoint.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.is::<UsageError>()
        || e.is::<toml::de::Error>()
        || matches!(e.downcast_ref::<semimatch::Error>(), Some(semimatch::Error::Config(_)));
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = ["warn", "info", "debug"][cli.verbose.min(2) as usize];
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::CompareGuessers(a) => commands::compare_guessers(&a),
        Command::CompareMi(a) => commands::compare_mi(&a),
        Command::GenData(a) => commands::gen_data(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
