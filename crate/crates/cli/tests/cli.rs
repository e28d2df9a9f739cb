use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn binary() -> Command {
    let mut command = Command::new(env!("CARGO_BIN_EXE_sparse-jacobi"));
    command.env_remove("SPARSE_JACOBI_THREADS");
    command.env_remove("SPARSE_JACOBI_PRECISION");
    command
}

/// Writes a configuration whose output goes to `<dir>/runs`.
fn write_config(dir: &Path, model: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "{model}\n[output]\ndir = {:?}\n",
        dir.join("runs").to_str().unwrap()
    );
    fs::write(&path, text).unwrap();
    path
}

const FREE: &str = "[model]\nfamily = { kind = \"explicit\", increments = [8, 32] }\np = 1.0";
const SPARSE: &str =
    "[model]\nfamily = { kind = \"explicit\", increments = [8, 32, 128] }\np = 0.6";

fn run(config: &Path, args: &[&str]) -> Output {
    binary()
        .arg(args[0])
        .arg("--config")
        .arg(config)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn run_dir(output: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&output.stdout).trim())
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn free_density_has_unit_mass() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), FREE);
    let output = run(&config, &["density"]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let dir = run_dir(&output);
    let mass = summary(&dir)["data"]["mass"].as_f64().unwrap();
    assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    let table = fs::read_to_string(dir.join("density.csv")).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("# run "));
    assert_eq!(lines.next(), Some("lambda,density,semicircle"));
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cells[1] - cells[2]).abs() < 1e-9, "{line}");
    }
}

#[test]
fn missing_key_names_its_path() {
    let temp = TempDir::new().unwrap();
    let config = write_config(
        temp.path(),
        "[model]\nfamily = { kind = \"explicit\", increments = [8] }",
    );
    let output = run(&config, &["density"]);
    assert_eq!(output.status.code(), Some(1));
    let message = stderr(&output);
    assert!(
        message.contains("model") && message.contains("`p`"),
        "{message}"
    );
}

#[test]
fn unknown_key_is_rejected() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), FREE);
    let output = run(&config, &["density", "--set", "task.density.points=3"]);
    assert_eq!(output.status.code(), Some(1));
    let message = stderr(&output);
    assert!(
        message.contains("task.density") && message.contains("points"),
        "{message}"
    );
}

#[test]
fn out_of_range_coupling_is_an_input_error() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), FREE);
    let output = run(&config, &["model", "--set", "model.p=1.5"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("model.p"));
}

#[test]
fn window_through_zero_energy_is_a_domain_error() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    let output = run(
        &config,
        &[
            "decay-scan",
            "--set",
            "task.decay_scan.window.lambda_a=-0.5",
        ],
    );
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
}

#[test]
fn violated_convolution_lemma_names_the_cell() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    let output = run(
        &config,
        &[
            "gevrey-verify",
            "--set",
            "task.gevrey_verify.k=1.0",
            "--set",
            "task.gevrey_verify.zero_term=\"equals_k\"",
        ],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(
        stderr(&output).contains("fails at cell k = "),
        "{}",
        stderr(&output)
    );
    assert_eq!(summary(&run_dir(&output))["passed"], false);
}

#[test]
fn extended_precision_is_reported_unavailable() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), FREE);
    let output = binary()
        .args(["density", "--config"])
        .arg(&config)
        .env("SPARSE_JACOBI_PRECISION", "extended")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("precision"), "{}", stderr(&output));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), FREE);
    let output = binary()
        .args(["model", "--config"])
        .arg(&config)
        .env("SPARSE_JACOBI_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(
        summary(&run_dir(&output))["config"]["numerics"]["threads"],
        3
    );
}

#[test]
fn identical_runs_write_identical_tables() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    let dir = run_dir(&run(&config, &["model"]));
    let positions = fs::read(dir.join("positions.csv")).unwrap();
    let dimensions = fs::read(dir.join("dimensions.csv")).unwrap();
    assert_eq!(run_dir(&run(&config, &["model"])), dir);
    assert_eq!(fs::read(dir.join("positions.csv")).unwrap(), positions);
    assert_eq!(fs::read(dir.join("dimensions.csv")).unwrap(), dimensions);
    let other = run(&config, &["model", "--set", "model.p=0.7"]);
    assert_ne!(run_dir(&other), dir);
}

#[test]
fn report_on_an_empty_directory_lists_expected_files() {
    let temp = TempDir::new().unwrap();
    let output = binary().arg("report").arg(temp.path()).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let message = stderr(&output);
    assert!(
        message.contains("summary.json") && message.contains("config.json"),
        "{message}"
    );
}

#[test]
fn report_names_missing_artifacts() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    let dir = run_dir(&run(&config, &["model"]));
    fs::remove_file(dir.join("dimensions.csv")).unwrap();
    let output = binary().arg("report").arg(&dir).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("dimensions.csv"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn report_shows_the_fitted_exponent() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    let dir = run_dir(&run(
        &config,
        &["decay-scan", "--set", "task.decay_scan.t_points=12"],
    ));
    let output = binary().arg("report").arg(&dir).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    let data = &summary(&dir)["data"];
    let expected = format!(
        "fitted exponent {:.4} ± {:.4}",
        data["fitted_exponent"].as_f64().unwrap(),
        data["half_width"].as_f64().unwrap()
    );
    assert!(text.contains(&expected), "{text}");
    assert!(text.contains("regime: desk-scale"));
}

#[test]
fn report_counts_certificate_cells() {
    let temp = TempDir::new().unwrap();
    let config = write_config(temp.path(), SPARSE);
    run(&config, &["gevrey-verify"]);
    run(&config, &["model"]);
    let runs = temp.path().join("runs");
    let output = binary().arg("report").arg(&runs).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = String::from_utf8_lossy(&output.stdout);
    let gevrey = fs::read_dir(&runs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("gevrey-verify"))
        })
        .unwrap();
    let summary = summary(&gevrey);
    let cells = summary["data"]["certificate"]["cells"].as_array().unwrap();
    let held = cells.iter().filter(|c| c["passed"] == true).count();
    let expected = format!(
        "certificate cells: {held} passed, {} failed",
        cells.len() - held
    );
    assert!(text.contains(&expected), "{text}");
    assert!(text.contains("2 runs, 0 with failing checks"), "{text}");
}

#[test]
fn asymptotic_families_are_flagged() {
    let temp = TempDir::new().unwrap();
    let config = write_config(
        temp.path(),
        "[model]\nfamily = { kind = \"log_squared\", c = 0.51, delta = 0.5 }\nj_max = 4\np = 0.6",
    );
    let dir = run_dir(&run(&config, &["model"]));
    let output = binary().arg("report").arg(&dir).output().unwrap();
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(
        text.contains("asymptotic — not desk-reproducible"),
        "{text}"
    );
}
