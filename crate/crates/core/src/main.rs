use std::path::PathBuf;
use std::process::ExitCode;

use capeig::cli::{run, Command, RunArgs};
use clap::{Parser, Subcommand};

/// Eigenvalues, torsion functions and shape optimization for capacitary measures.
#[derive(Parser)]
#[command(name = "capeig", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// No progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Variational eigenvalues of the configured measure.
    Solve,
    /// Torsion function of the configured measure.
    Torsion,
    /// Convergence diagnostics for a fictitious-domain sequence.
    GammaDiag,
    /// Optimal potential under a Psi budget.
    OptimizePotential,
    /// Optimal set under a volume constraint.
    OptimizeSet,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("capeig: --config is required");
        return ExitCode::from(2);
    };
    let command = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::Torsion => Command::Torsion,
        Sub::GammaDiag => Command::GammaDiag,
        Sub::OptimizePotential => Command::OptimizePotential,
        Sub::OptimizeSet => Command::OptimizeSet,
    };
    let code = run(&RunArgs {
        command,
        config,
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    });
    ExitCode::from(code as u8)
}
