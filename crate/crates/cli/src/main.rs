//! `udfe`: train, sample, evaluate and ablate from the command line.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 bad configuration or
//! input, 3 numerical failure, 4 unreadable or mismatched checkpoint.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use udfe_nn::NnError;

use crate::config::Config;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("invalid configuration {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] udfe_core::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl From<udfe_core::data::DataError> for Failure {
    fn from(e: udfe_core::data::DataError) -> Self {
        Failure::Core(e.into())
    }
}

impl From<udfe_core::training::CheckpointError> for Failure {
    fn from(e: udfe_core::training::CheckpointError) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    pub fn output(what: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Failure::Output(format!("{what}: {e}"))
    }

    fn exit_code(&self) -> u8 {
        use udfe_core::Error as E;
        match self {
            Failure::Output(_) => 1,
            Failure::Config(_) => 2,
            Failure::Core(e) => match e {
                E::Numerical(_) | E::Nn(NnError::NonFinite(_)) => 3,
                E::Checkpoint(_) => 4,
                E::Io(_) => 1,
                E::Config { .. } | E::Invalid(_) | E::Nn(_) | E::Data(_) => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "udfe", version, about = "Conditional GAN synthesis of functional-ultrasound frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the run seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Extractor {
    Pool16,
    External,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a generator/discriminator pair; writes losses.csv and checkpoint/.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Sample frames of one class from a checkpoint as gen_<label>_<i>.pgm.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        label: usize,
    },
    /// SSIM, MS-SSIM and FID of a generated set against real frames; writes metrics.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: PathBuf,
        #[arg(long, conflicts_with = "checkpoint")]
        fake: Option<PathBuf>,
        /// Generate one fake per real frame, with matching labels.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "pool16")]
        extractor: Extractor,
        /// `[N,D]` raw tensor of real embeddings (external extractor).
        #[arg(long)]
        real_features: Option<PathBuf>,
        #[arg(long)]
        fake_features: Option<PathBuf>,
    },
    /// PCA + random forest on real frames, optionally augmented; writes classify.csv.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        synth: Option<PathBuf>,
    },
    /// Train and score the four model variants; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded phantom dataset with a train/test manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::Train { common }
        | Command::Generate { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Classify { common, .. }
        | Command::Ablate { common }
        | Command::Synth { common } => common,
    };
    let cfg = Config::load(common.config.as_deref())?;
    std::fs::create_dir_all(&common.out).map_err(|e| Failure::output(common.out.display(), e))?;
    let (out, seed) = (common.out.as_path(), common.seed);
    let result = match &cli.command {
        Command::Train { .. } => commands::train(&cfg, seed, out),
        Command::Generate { checkpoint, n, label, .. } => commands::generate(checkpoint, *n, *label, seed, out),
        Command::Evaluate { real, fake, checkpoint, extractor, real_features, fake_features, .. } => {
            commands::evaluate(&commands::EvaluateArgs {
                cfg: &cfg,
                real,
                fake: fake.as_deref(),
                checkpoint: checkpoint.as_deref(),
                extractor: *extractor,
                real_features: real_features.as_deref(),
                fake_features: fake_features.as_deref(),
                seed,
                out,
            })
        }
        Command::Classify { train, test, synth, .. } => commands::classify(&cfg, train, test, synth.as_deref(), seed, out),
        Command::Ablate { .. } => commands::ablate(&cfg, seed, out),
        Command::Synth { .. } => commands::synth(&cfg, seed, out),
    };
    for key in cfg.unused() {
        log::warn!("configuration key `{key}` is not used by this command");
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
