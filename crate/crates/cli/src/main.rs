//! `songvec`: train and evaluate word/tag/track embeddings for music
//! tagging and retrieval.
//!
//! Exit codes: 0 success, 1 internal error, 2 user/config error.

mod commands;
mod config;
mod manifest;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

pub fn user_error(message: impl Display) -> CliError {
    CliError {
        code: 2,
        message: message.to_string(),
    }
}

pub fn internal_error(message: impl Display) -> CliError {
    CliError {
        code: 1,
        message: message.to_string(),
    }
}

impl From<songvec_core::Error> for CliError {
    fn from(e: songvec_core::Error) -> Self {
        // Data and configuration problems are the user's to fix.
        user_error(e)
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (JSON); flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory for artifacts, reports, and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    pub fn load_config(&self) -> CliResult<config::RunConfig> {
        let mut cfg = config::RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(workers) = self.workers {
            if workers == 0 {
                return Err(user_error("--workers must be >= 1"));
            }
            cfg.workers = workers;
        }
        Ok(cfg)
    }

    pub fn require_out(&self) -> CliResult<&PathBuf> {
        self.out
            .as_ref()
            .ok_or_else(|| user_error("this command writes artifacts; pass --out DIR"))
    }
}

#[derive(Parser)]
#[command(
    name = "songvec",
    version,
    about = "Word, tag, and track embeddings for music tagging and retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize the corpora, build the vocabulary, and write shard files.
    BuildCorpus(commands::build_corpus::BuildCorpusArgs),
    /// Train the word embedding with skip-gram negative sampling.
    TrainWord(commands::train_word::TrainWordArgs),
    /// Train the audio-word joint embedding on supervision records.
    TrainJoint(commands::train_joint::TrainJointArgs),
    /// Turn WAV clips into feature vectors (excerpt + log-mel + summary).
    ExtractFeatures(commands::extract_features::ExtractFeaturesArgs),
    /// Run an evaluation task and write a report.
    Eval(commands::eval_cmd::EvalArgs),
    /// Rank vocabulary tokens (or tracks) against a text query.
    Query(commands::query::QueryArgs),
}

fn run() -> CliResult<()> {
    match Cli::parse().command {
        Command::BuildCorpus(args) => commands::build_corpus::run(args),
        Command::TrainWord(args) => commands::train_word::run(args),
        Command::TrainJoint(args) => commands::train_joint::run(args),
        Command::ExtractFeatures(args) => commands::extract_features::run(args),
        Command::Eval(args) => commands::eval_cmd::run(args),
        Command::Query(args) => commands::query::run(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
