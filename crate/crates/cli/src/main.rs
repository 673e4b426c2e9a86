use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polyc_cli::commands::{
    cmd_certify, cmd_compare, cmd_eval, cmd_fixture, cmd_train, CertifyArgs, CompareArgs, EvalArgs, FixtureArgs,
    TrainArgs,
};
use polyc_cli::error::CliResult;

#[derive(Parser)]
#[command(name = "polyc", version, about = "Lyapunov-regularized policy optimization with almost-Lyapunov certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and critic from a TOML configuration.
    Train(TrainArgs),
    /// Roll out a checkpoint with noise-free actions.
    Eval(EvalArgs),
    /// Certify a checkpoint's critic on its closed loop.
    Certify(CertifyArgs),
    /// Side-by-side landscapes for several checkpoints and an LQR candidate.
    Compare(CompareArgs),
    /// Write the linear test fixture bundle.
    Fixture(FixtureArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(drop),
        Command::Eval(args) => cmd_eval(&args).map(drop),
        Command::Certify(args) => cmd_certify(&args).map(drop),
        Command::Compare(args) => cmd_compare(&args).map(drop),
        Command::Fixture(args) => cmd_fixture(&args).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
