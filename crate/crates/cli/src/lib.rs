//! Batch pipeline driver: feature extraction, factor estimation,
//! perturbation, pairing, GAN training, augmentation and inspection.
//!
//! Exit codes: 0 success, 1 partial or data failure, 2 configuration or
//! validation error.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod log;

pub use config::PipelineConfig;
pub use log::Logger;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing {what}: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("no target speakers in manifest")]
    NoTargets,
    #[error("no alignments for target speakers {0:?}")]
    MissingAlignments(Vec<String>),
    #[error("{failed} of {total} items failed: {ids:?}")]
    Partial { failed: usize, total: usize, ids: Vec<String> },
    #[error("count mismatch for {tag}: expected {expected}, written {written}, failed {failed}")]
    CountMismatch { tag: String, expected: usize, written: usize, failed: usize },
    #[error(transparent)]
    Corpus(#[from] dysaug::corpus::CorpusError),
    #[error(transparent)]
    Gan(#[from] dysaug::gan::GanError),
    #[error(transparent)]
    Signal(#[from] dysaug::signal::SignalError),
    #[error(transparent)]
    Subspace(#[from] dysaug::subspace::SubspaceError),
    #[error(transparent)]
    Nn(#[from] dysaug::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dysaug::corpus::CorpusError as C;
        use dysaug::gan::GanError as G;
        match self {
            CliError::Config(_)
            | CliError::MissingPath { .. }
            | CliError::MissingCheckpoint(_)
            | CliError::NoTargets => 2,
            CliError::Corpus(C::MissingWordIds(_) | C::MixedTargetSpeakers(_) | C::EmptySide(_)) => 2,
            CliError::Gan(G::InvalidConfig(_) | G::UnknownSpeaker(_) | G::UnknownSpeakerInPairing(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dysaug", version, about = "Speaker-dependent augmentation of atypical speech features")]
#[command(after_help = "Any config field can be overridden with --section.key=value (e.g. --sbg.lambda=0.2); \
                        DYSAUG_SEED overrides the config seed.")]
pub struct Cli {
    /// TOML pipeline config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Suppress structured log records on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tempo,
    Speed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log-Mel features for every manifest utterance into one archive.
    Extract {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speaker-dependent factors and feature statistics from phone alignments.
    EstimateFactors {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tempo or speed perturbation of one WAV file.
    Perturb {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        factor: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Control-to-target pairings, one manifest per target speaker.
    Pair,
    /// Convolutional GANs on parallel control/target pairs.
    TrainDcgan {
        /// Restrict to one target speaker.
        #[arg(long)]
        speaker: Option<String>,
        /// Perturbation applied to control speech before pairing.
        #[arg(long, value_enum)]
        input: Option<Method>,
    },
    /// Spectral-basis GAN over all target speakers.
    TrainSbg,
    /// Augmented archives for the configured tags.
    Augment,
    /// One archive per lambda plus a deviation table.
    SweepLambda,
    /// Summary of an archive or checkpoint.
    Inspect {
        path: PathBuf,
        /// List every record.
        #[arg(long)]
        records: bool,
    },
}

/// Parses `args` (without the program name) and runs the command; returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = config::split_overrides(args);
    let cli = match Cli::try_parse_from(std::iter::once("dysaug".to_string()).chain(rest)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let log = Logger::new(command_name(&cli.command), cli.quiet);
    let result = PipelineConfig::load(cli.config.as_deref(), &overrides)
        .and_then(|cfg| commands::dispatch(&cli.command, &cfg, &log));
    match result {
        Ok(()) => 0,
        Err(e) => {
            log.error("failed", &[("error", e.to_string().into())]);
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Extract { .. } => "extract",
        Command::EstimateFactors { .. } => "estimate-factors",
        Command::Perturb { .. } => "perturb",
        Command::Pair => "pair",
        Command::TrainDcgan { .. } => "train-dcgan",
        Command::TrainSbg => "train-sbg",
        Command::Augment => "augment",
        Command::SweepLambda => "sweep-lambda",
        Command::Inspect { .. } => "inspect",
    }
}
