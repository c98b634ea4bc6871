use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod compare;
mod error;
mod eval;
mod generate;
mod hashing;
mod settings;
mod simulate;

/// Bid optimization and offline auction replay.
#[derive(Debug, Parser)]
#[command(name = "ocpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic bid log
    Generate(generate::GenerateArgs),
    /// Replay a bid log under one strategy
    Simulate(simulate::SimulateArgs),
    /// Compare two runs over the same log
    Compare(compare::CompareArgs),
    /// AUC, GAUC and calibration gap of a scores file
    Eval(eval::EvalArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OCPC_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Compare(a) => compare::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
