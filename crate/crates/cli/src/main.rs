use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eip_cli::commands::{self, NprimeStudy};
use eip_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "eip", version, about = "Ensemble inverse generative models: data, training, recovery, evaluation")]
struct Cli {
    /// TOML experiment config; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set train.steps=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training corpus and an evaluation observation set.
    GenData,
    /// Train the configured methods on the corpus.
    Train {
        /// Train only these methods.
        #[arg(long)]
        method: Vec<String>,
    },
    /// Recover an ensemble for the observation set.
    Recover {
        #[arg(long)]
        method: Option<String>,
    },
    /// SWD of every configured method over the evaluation grid.
    Sweep {
        /// Use the dense grid from -1 to 1 in steps of 0.01.
        #[arg(long)]
        full: bool,
    },
    /// TARP expected-coverage curve.
    Tarp,
    /// SWD as a function of the inference or training set size.
    NprimeStudy {
        #[arg(long, value_enum, default_value = "inference")]
        study: NprimeStudy,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides).and_then(|cfg| match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train { method } => commands::train(&cfg, &method),
        Command::Recover { method } => commands::recover(&cfg, method.as_deref()),
        Command::Sweep { full } => commands::sweep(&cfg, full),
        Command::Tarp => commands::tarp(&cfg),
        Command::NprimeStudy { study } => commands::nprime_study(&cfg, study),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = eip_cli::classify(&e);
            let msg = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
