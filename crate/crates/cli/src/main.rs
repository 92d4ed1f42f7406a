//! Experiment front-end for the dual-domain privacy-preserving
//! recommender: data preparation, training, evaluation, sweeps, ablations,
//! and embedding export, driven by a key-value config file.

use clap::{Parser, Subcommand};
use p2rec_cli::commands;
use p2rec_cli::config::{ExperimentConfig, TransportKind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "p2rec", version, about)]
struct Cli {
    /// Experiment config file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// How the two domain trainers exchange bundles: inproc | socket.
    #[arg(long, global = true)]
    transport: Option<String>,

    /// Enable an ablation (repeatable): rev vis txt com spe intra inter obf.
    #[arg(long = "ablate", global = true)]
    ablate: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset as raw input files.
    GenData,
    /// Load or generate data, k-core filter, split, freeze candidates.
    Prepare,
    /// Train both domains on the prepared dataset.
    Train,
    /// Re-evaluate saved checkpoints.
    Evaluate,
    /// One full run per grid value of one hyperparameter.
    Sweep {
        #[arg(long)]
        param: String,
    },
    /// The full model plus all eight single-component ablations.
    Ablate,
    /// Export final obfuscated embeddings and principal projections.
    ExportEmbeddings,
    /// Domain-B trainer for the two-process deployment (spawned by train).
    Worker {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        connect: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(format!("config file not found: {}", path.display()).into());
            }
            ExperimentConfig::from_file(path)?
        }
        None => ExperimentConfig::from_text("[data]\nsource = synthetic\n")?,
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = &cli.transport {
        cfg.transport = TransportKind::parse(t)?;
    }
    for name in &cli.ablate {
        cfg.train.ablations.enable(name)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData => commands::data::cmd_gen_data(&cfg),
        Command::Prepare => commands::data::cmd_prepare(&cfg),
        Command::Train => commands::train::cmd_train(&cfg).map(|_| ()),
        Command::Evaluate => commands::train::cmd_evaluate(&cfg).map(|_| ()),
        Command::Sweep { param } => {
            let param = commands::batch::SweepParam::parse(param)?;
            commands::batch::cmd_sweep(&cfg, param).map(|_| ())
        }
        Command::Ablate => commands::batch::cmd_ablate(&cfg).map(|_| ()),
        Command::ExportEmbeddings => commands::export::cmd_export_embeddings(&cfg),
        Command::Worker {
            domain,
            prepared,
            connect,
        } => commands::train::cmd_worker(&cfg, domain, prepared, connect),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
