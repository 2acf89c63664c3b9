//! Pipeline driver: ingest corpora, train the base translation model,
//! synthesize MT data, train translationese classifiers, run reward
//! alignment, decode, and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Environment variable consulted for the config file when --config is
/// not given.
const CONFIG_ENV: &str = "NATMT_CONFIG";

#[derive(Parser)]
#[command(
    name = "natmt",
    about = "Reward-aligned machine translation pipeline",
    version
)]
struct Cli {
    /// Config file (flat key=value); defaults to $NATMT_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set model.width=64 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Shortcut for --set seed=<N>.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the corpus manifest and build vocabularies.
    Ingest,
    /// Train the base translation model (plain or tag-prefixed).
    TrainBase,
    /// Translate the training split and keep non-identical outputs as an
    /// MT-labeled corpus.
    SynthMt,
    /// Train binary translationese classifiers from provenance pools.
    TrainClassifier,
    /// Reward-align the base model toward natural output.
    Align,
    /// Beam-decode the test split with a checkpoint.
    Translate,
    /// Decode by reranking sampled candidates with a classifier.
    Rerank,
    /// Score a system's outputs: accuracy, classification and diversity.
    Evaluate,
    /// Re-evaluate align checkpoints into a training-curve file.
    Curves,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::TrainBase => "train-base",
            Command::SynthMt => "synth-mt",
            Command::TrainClassifier => "train-classifier",
            Command::Align => "align",
            Command::Translate => "translate",
            Command::Rerank => "rerank",
            Command::Evaluate => "evaluate",
            Command::Curves => "curves",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut overrides = Vec::new();
    for item in &cli.overrides {
        match item.split_once('=') {
            Some((k, v)) => overrides.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                eprintln!("error: --set expects KEY=VALUE, got {item:?}");
                return ExitCode::from(1);
            }
        }
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }

    let config_path = cli
        .config
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let cfg = match RunConfig::load(config_path.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    match commands::dispatch(cli.command.name(), &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.0);
            ExitCode::from(1)
        }
    }
}
