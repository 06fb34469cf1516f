//! Command-line pipeline: generate synthetic data, plan splits, train,
//! personalize, and evaluate behavior-prediction models with reproducible
//! configurations and reports.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "atlbp",
    about = "Behavior-prediction pipeline: synthetic data, splits, LSTM training, personalization, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that reads a run configuration.
/// Flags override values from --config.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// PRNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Split kind: random | leave-users-out | leave-users-out-personalized.
    #[arg(long)]
    mode: Option<String>,
    /// Number of folds.
    #[arg(long)]
    k: Option<usize>,
    /// Personalization share of each test user's session.
    #[arg(long)]
    fraction: Option<f64>,
    /// Which embeddings to fuse: none | affect | identity | both.
    #[arg(long = "embedding-mode")]
    embedding_mode: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, atlbp_core::Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set("seed", seed);
        }
        if let Some(mode) = &self.mode {
            cfg.set("split", mode);
        }
        if let Some(k) = self.k {
            cfg.set("k", k);
        }
        if let Some(fraction) = self.fraction {
            cfg.set("fraction", fraction);
        }
        if let Some(mode) = &self.embedding_mode {
            cfg.set("embedding_mode", mode);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset in the JSONL ingestion format.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset path (.jsonl or .jsonl.gz).
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a dataset: users, sessions, segments, label histogram.
    Describe {
        /// Dataset path.
        #[arg(long)]
        manifest: PathBuf,
        /// Write the summary JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a split plan and write it as JSON.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Output plan path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one fold of a plan and write a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Split plan JSON produced by `split` or `crossval`.
        #[arg(long)]
        plan: PathBuf,
        /// Fold index within the plan.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one fold's evaluation segments.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full protocol: split, per-fold training, optional
    /// per-user personalization, evaluation, and aggregation.
    Crossval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a checkpoint on one test user's personalization segments.
    Personalize {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Personalization-shaped split plan.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Test user to personalize for.
        #[arg(long)]
        user: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), atlbp_core::Error> {
    match cli.command {
        Command::Generate { config, out } => commands::cmd_generate(&config.resolve()?, &out),
        Command::Describe { manifest, out } => commands::cmd_describe(&manifest, out.as_deref()),
        Command::Split { config, manifest, out } => {
            commands::cmd_split(&config.resolve()?, &manifest, &out)
        }
        Command::Train { config, manifest, plan, fold, out } => {
            commands::cmd_train(&config.resolve()?, &manifest, &plan, fold, &out)
        }
        Command::Eval { config, checkpoint, manifest, plan, fold, out } => {
            commands::cmd_eval(&config.resolve()?, &checkpoint, &manifest, &plan, fold, &out)
        }
        Command::Crossval { config, manifest, out } => {
            commands::cmd_crossval(&config.resolve()?, &manifest, &out)
        }
        Command::Personalize { config, checkpoint, manifest, plan, fold, user, out } => commands::cmd_personalize(
            &config.resolve()?,
            &checkpoint,
            &manifest,
            &plan,
            fold,
            &user,
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
