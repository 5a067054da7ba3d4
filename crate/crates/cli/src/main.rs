use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gfnlab::experiment::{run_file, Command};

/// GFlowNet training, structure learning, active learning and design runs.
#[derive(Parser)]
#[command(name = "gfnlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a GFlowNet on an enumerable environment.
    Train(RunArgs),
    /// Learn a posterior over DAGs and compare it with exact enumeration.
    Causal(RunArgs),
    /// Run the active-learning loop.
    Al(RunArgs),
    /// Estimate information gain for each design of a toy model.
    Mi(RunArgs),
    /// Enumerate the environment and print the exact target distribution.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, env = "GFNLAB_OUT", default_value = "runs")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress console output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Causal(a) => (Command::Causal, a),
        Cmd::Al(a) => (Command::Al, a),
        Cmd::Mi(a) => (Command::Mi, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
    };
    match run_file(command, &args.config, args.seed, &args.out, args.quiet) {
        Ok(summary) => {
            if !args.quiet {
                println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gfnlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
