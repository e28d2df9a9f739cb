//! Summaries of finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::output::{Summary, CONFIG_FILE, SUMMARY_FILE};
use crate::CliError;

/// Run directories under `dir`: `dir` itself if it holds a summary,
/// otherwise its immediate subdirectories that do.
fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join(SUMMARY_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| path.join(SUMMARY_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::MissingArtifacts(format!(
            "{} holds no run; expected {SUMMARY_FILE}, {CONFIG_FILE} and the CSV tables \
             of a subcommand, either in the directory or in its subdirectories",
            dir.display()
        )));
    }
    Ok(dirs)
}

fn load_summary(dir: &Path) -> Result<Summary, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let summary: Summary = serde_json::from_str(&text)?;
    let missing: Vec<&str> = summary
        .artifacts
        .iter()
        .filter(|name| !dir.join(name).is_file())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(format!(
            "{}: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    Ok(summary)
}

fn number(value: &serde_json::Value, pointer: &str) -> Option<f64> {
    value.pointer(pointer).and_then(serde_json::Value::as_f64)
}

fn describe(dir: &Path, summary: &Summary) -> String {
    let mut text = String::new();
    let passed = summary.checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(
        text,
        "{} [{}] {}",
        summary.subcommand,
        summary.run_id,
        dir.display()
    );
    let _ = writeln!(text, "  regime: {}", summary.regime);
    let _ = writeln!(
        text,
        "  checks: {passed} passed, {} failed",
        summary.checks.len() - passed
    );
    for check in &summary.checks {
        let mark = if check.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "    {mark} {}: {}", check.name, check.detail);
    }
    match summary.subcommand.as_str() {
        "decay-scan" => {
            if let (Some(exponent), Some(width)) = (
                number(&summary.data, "/fitted_exponent"),
                number(&summary.data, "/half_width"),
            ) {
                let _ = writeln!(text, "  fitted exponent {exponent:.4} ± {width:.4}");
            }
        }
        "gevrey-verify" => {
            if let Some(cells) = summary
                .data
                .pointer("/certificate/cells")
                .and_then(|c| c.as_array())
            {
                let held = cells
                    .iter()
                    .filter(|c| c["passed"].as_bool() == Some(true))
                    .count();
                let _ = writeln!(
                    text,
                    "  certificate cells: {held} passed, {} failed",
                    cells.len() - held
                );
            }
        }
        _ => {}
    }
    for note in &summary.notes {
        let _ = writeln!(text, "  note: {note}");
    }
    text
}

/// Report over one run directory or a directory of runs; the boolean is
/// true when every check of every run passed.
pub fn report(dir: &Path) -> Result<(String, bool), CliError> {
    let mut text = String::new();
    let mut all_passed = true;
    let (mut runs, mut failed_runs) = (0, 0);
    for run in run_dirs(dir)? {
        let summary = load_summary(&run)?;
        all_passed &= summary.passed;
        runs += 1;
        failed_runs += usize::from(!summary.passed);
        text.push_str(&describe(&run, &summary));
    }
    let _ = writeln!(text, "{runs} runs, {failed_runs} with failing checks");
    Ok((text, all_passed))
}
