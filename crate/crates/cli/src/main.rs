use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{DatasetKind, ExperimentConfig};

/// Recurrent mixture density recommenders over item embeddings.
#[derive(Debug, Parser)]
#[command(name = "mixrec", version)]
struct Cli {
    /// Experiment manifest (TOML); flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory holding every artifact of the experiment.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a raw interaction log into train/valid/test sequences.
    Preprocess {
        #[arg(long, value_enum)]
        kind: Option<DatasetKind>,
        /// Raw log; overrides `dataset.path`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train CBOW item vectors on the training split.
    Embed,
    /// Train one or more models, e.g. `--model RNN-ATT-RNN-4`.
    Train {
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
    },
    /// Score models and baselines on the test split.
    Evaluate {
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
        /// Cutoffs, e.g. `--k 10,20`.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Top-k items with their log-density for an ad-hoc history.
    Recommend {
        #[arg(long)]
        model: String,
        /// Item tokens, oldest first.
        #[arg(long, value_delimiter = ',', required = true)]
        history: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        k: Vec<usize>,
        #[arg(long)]
        exclude_history: bool,
    },
    /// Build the co-occurrence table and evaluate RVI and Item-CF.
    Baseline {
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Generate a synthetic corpus, then train and evaluate `--model`s on it.
    Synth {
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Preprocess { kind, input } => {
            if let Some(kind) = kind {
                cfg.dataset.kind = kind;
            }
            if input.is_some() {
                cfg.dataset.path = input;
            }
            cfg.check_paths()?;
            commands::preprocess(&cfg)
        }
        Command::Embed => commands::embed(&cfg),
        Command::Train { model } => commands::train(&cfg, &model),
        Command::Evaluate { model, k } => commands::evaluate(&cfg, &model, &k),
        Command::Recommend {
            model,
            history,
            k,
            exclude_history,
        } => commands::recommend(&cfg, &model, &history, k[0], exclude_history),
        Command::Baseline { k } => commands::baseline(&cfg, &k),
        Command::Synth { model, k } => commands::synth(&cfg, &model, &k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
