//! `viforge`: run ACVI-family solvers and baselines from JSON configs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CommandError, GlobalOptions, EXIT_CONFIG, EXIT_SOLVER};

#[derive(Parser)]
#[command(name = "viforge", version, about = "Constrained variational inequality solvers and benchmarks")]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver and baselines on one problem.
    Solve { config: PathBuf },
    /// Run one experiment per point of the config's sweep grid.
    Sweep { config: PathBuf },
    /// Run the oracle and invariant suite.
    Verify {
        #[arg(long, hide = true)]
        corrupt_projector: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VIFORGE_LOG", "error")).init();
    let cli = Cli::parse();
    let opts = GlobalOptions {
        jobs: cli.jobs,
        out: cli.out,
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Solve { config } => commands::solve(config, &opts),
        Command::Sweep { config } => commands::sweep(config, &opts),
        Command::Verify { corrupt_projector } => Ok(commands::verify(&opts, *corrupt_projector)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CommandError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CommandError::Io(msg) | CommandError::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
