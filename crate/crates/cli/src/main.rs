//! `mstm`: generate shock-propagation datasets, train the surrogate, roll
//! it out, score the rollouts and plot the scores.

mod commands;
mod font;
mod io;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mstm", version, about = "Shock-propagation surrogate toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for sampling, splitting, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` configuration file; unknown keys are errors.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default 1). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Base directory for relative output paths.
    #[arg(long, global = true, env = "MSTM_OUTPUT_ROOT")]
    pub output_root: Option<PathBuf>,
    /// Record 0 for wall-clock values so reruns are byte-identical.
    #[arg(long, global = true, env = "MSTM_NO_CLOCK")]
    pub no_clock: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate sequences and write them to a container.
    Generate(commands::generate::GenerateArgs),
    /// Train on a container with teacher forcing.
    Train(commands::train::TrainArgs),
    /// Roll a checkpoint out over the test split.
    Rollout(commands::rollout::RolloutArgs),
    /// Score predictions against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Plot metric curves from an evaluation directory.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate::run(&cli.global, a),
        Command::Train(a) => commands::train::run(&cli.global, a),
        Command::Rollout(a) => commands::rollout::run(&cli.global, a),
        Command::Evaluate(a) => commands::evaluate::run(&cli.global, a),
        Command::Report(a) => commands::report::run(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
