//! Run directories, tables and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// A named CSV table; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    fn to_csv(&self, run_id: &str) -> Result<Vec<u8>, CliError> {
        let mut buffer = format!("# run {run_id}\n").into_bytes();
        {
            let mut writer = csv::Writer::from_writer(&mut buffer);
            writer.write_record(&self.header)?;
            for row in &self.rows {
                writer.write_record(row)?;
            }
            writer.flush()?;
        }
        Ok(buffer)
    }
}

/// One pass/fail check of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a subcommand produced before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
    pub data: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub subcommand: String,
    pub run_id: String,
    pub passed: bool,
    pub regime: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub data: serde_json::Value,
}

/// Hash of the subcommand and the resolved configuration.
pub fn run_id(subcommand: &str, config: &RunConfig) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    hasher.update(subcommand.as_bytes());
    hasher.update([0]);
    hasher.update(serde_json::to_vec(config)?);
    let digest = hasher.finalize();
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let temp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&temp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&temp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&temp);
    }
    result.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes every artifact of a run and returns its directory.
pub fn persist(
    subcommand: &str,
    config: &RunConfig,
    regime: &str,
    outcome: &Outcome,
) -> Result<PathBuf, CliError> {
    let run_id = run_id(subcommand, config)?;
    let dir = config.output.dir.join(format!("{subcommand}-{run_id}"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let config_json = serde_json::to_value(config)?;
    write_atomic(
        &dir.join(CONFIG_FILE),
        &serde_json::to_vec_pretty(&config_json)?,
    )?;
    let mut artifacts = vec![CONFIG_FILE.to_owned()];
    if config.output.formats.contains(&Format::Csv) {
        for table in &outcome.tables {
            write_atomic(&dir.join(table.file_name()), &table.to_csv(&run_id)?)?;
            artifacts.push(table.file_name());
        }
    }
    if config.output.formats.contains(&Format::Json) {
        write_atomic(
            &dir.join("data.json"),
            &serde_json::to_vec_pretty(&outcome.data)?,
        )?;
        artifacts.push("data.json".into());
    }
    let summary = Summary {
        subcommand: subcommand.into(),
        run_id,
        passed: outcome.passed(),
        regime: regime.into(),
        checks: outcome.checks.clone(),
        notes: outcome.notes.clone(),
        artifacts,
        config: config_json,
        data: outcome.data.clone(),
    };
    write_atomic(
        &dir.join(SUMMARY_FILE),
        &serde_json::to_vec_pretty(&summary)?,
    )?;
    Ok(dir)
}
