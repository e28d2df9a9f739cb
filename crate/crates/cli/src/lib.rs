//! Front end for the sparse Jacobi toolkit: configuration loading, the
//! computational subcommands, run persistence and reports.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use std::path::Path;

use sparse_jacobi::ErrorClass;

pub use commands::Task;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error(transparent)]
    Core(#[from] sparse_jacobi::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::Io(error.to_string())
    }
}

/// Exit code when every check passed.
pub const EXIT_OK: i32 = 0;
/// Exit code for invalid input or configuration.
pub const EXIT_INPUT: i32 = 1;
/// Exit code when a tolerance or a verification check fails.
pub const EXIT_TOLERANCE: i32 = 2;
/// Exit code for domain errors and exceeded resource limits.
pub const EXIT_DOMAIN: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Input => EXIT_INPUT,
                ErrorClass::Tolerance => EXIT_TOLERANCE,
                ErrorClass::Domain => EXIT_DOMAIN,
            },
            _ => EXIT_INPUT,
        }
    }
}

/// Loads the configuration, runs `task`, writes the run directory and
/// returns the exit code.
pub fn run_task(task: Task, config_path: &Path, overrides: &[String]) -> Result<i32, CliError> {
    let config = config::load(config_path, overrides, |name| std::env::var(name).ok())?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(config.numerics.threads)
        .build_global();
    let outcome = task.run(&config)?;
    let regime = config.model.family.regime().label();
    let dir = output::persist(task.name(), &config, regime, &outcome)?;
    println!("{}", dir.display());
    for note in &outcome.notes {
        eprintln!("note: {note}");
    }
    let failing: Vec<_> = outcome.checks.iter().filter(|c| !c.passed).collect();
    for check in &failing {
        eprintln!("check failed: {}: {}", check.name, check.detail);
    }
    Ok(if failing.is_empty() {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    })
}
