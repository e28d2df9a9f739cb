use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_jacobi_cli::{report, run_task, CliError, Task, EXIT_OK, EXIT_TOLERANCE};

#[derive(Parser)]
#[command(
    name = "sparse-jacobi",
    version,
    about = "Sparse off-diagonal Jacobi matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set model.p=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Barrier positions, offsets and Hausdorff dimensions.
    Model(RunArgs),
    /// Absolutely continuous approximant of the spectral measure.
    Density(RunArgs),
    /// Decay of the Fourier transform with resonance annotations.
    DecayScan(RunArgs),
    /// Resonant frequencies and critical spectral parameters.
    Resonance(RunArgs),
    /// Van der Corput kernel bounds.
    Corput(RunArgs),
    /// Decay of smooth synthetic measures and the Plancherel route.
    LemmaMain(RunArgs),
    /// Derivative bounds of the Prüfer angles.
    GevreyVerify(RunArgs),
    /// Spectral measure of the Kronecker sum.
    Kronecker(RunArgs),
    /// Summarise finished runs.
    Report {
        /// A run directory or a directory of runs.
        dir: PathBuf,
    },
}

fn execute(command: Command) -> Result<i32, CliError> {
    let (task, args) = match command {
        Command::Report { dir } => {
            let (text, passed) = report::report(&dir)?;
            print!("{text}");
            return Ok(if passed { EXIT_OK } else { EXIT_TOLERANCE });
        }
        Command::Model(a) => (Task::Model, a),
        Command::Density(a) => (Task::Density, a),
        Command::DecayScan(a) => (Task::DecayScan, a),
        Command::Resonance(a) => (Task::Resonance, a),
        Command::Corput(a) => (Task::Corput, a),
        Command::LemmaMain(a) => (Task::LemmaMain, a),
        Command::GevreyVerify(a) => (Task::GevreyVerify, a),
        Command::Kronecker(a) => (Task::Kronecker, a),
    };
    run_task(task, &args.config, &args.overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = execute(cli.command).unwrap_or_else(|error| {
        eprintln!("error: {error}");
        error.exit_code()
    });
    ExitCode::from(code as u8)
}
