//! Run configuration: TOML file, `--set` overrides and environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_jacobi::fourier_decay::SyntheticMeasure;
use sparse_jacobi::gevrey_calculus::{PrecisionMode, ZeroTerm, K_WITHOUT_ZERO_TERM};
use sparse_jacobi::quadrature::QuadratureKind;
use sparse_jacobi::sparse_model::{SparseModel, SparsenessFamily, SparsenessSpec};
use sparse_jacobi::spectral_measure::TestFunction;

use crate::CliError;

pub const THREADS_VAR: &str = "SPARSE_JACOBI_THREADS";
pub const PRECISION_VAR: &str = "SPARSE_JACOBI_PRECISION";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: SparsenessFamily,
    /// Required unless the family lists its increments explicitly.
    pub j_max: Option<usize>,
    #[serde(default)]
    pub random_offsets: bool,
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
}

impl ModelSection {
    pub fn spec(&self) -> Result<SparsenessSpec, CliError> {
        let j_max = match (&self.family, self.j_max) {
            (_, Some(j)) => j,
            (SparsenessFamily::Explicit { increments }, None) => increments.len(),
            _ => {
                return Err(CliError::Config(
                    "model.j_max: required for this family".into(),
                ))
            }
        };
        Ok(SparsenessSpec {
            family: self.family.clone(),
            j_max,
            random_offsets: self.random_offsets,
            seed: self.seed,
        })
    }

    pub fn build(&self) -> Result<SparseModel, CliError> {
        Ok(SparseModel::from_spec(&self.spec()?, self.p)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub tolerance: f64,
    pub quadrature: QuadratureKind,
    pub precision: PrecisionMode,
    pub threads: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            quadrature: QuadratureKind::GaussLegendre,
            precision: PrecisionMode::Double,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// A test-function window `[λ_a, λ_b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub flatness: f64,
    /// Allow the window to contain `λ = 0`.
    pub wide: bool,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            lambda_a: 0.5,
            lambda_b: 1.5,
            flatness: 0.0,
            wide: false,
        }
    }
}

impl WindowSpec {
    pub fn test_function(&self) -> Result<TestFunction, CliError> {
        let f = if self.wide {
            TestFunction::wide(self.lambda_a, self.lambda_b, self.flatness)?
        } else {
            TestFunction::new(self.lambda_a, self.lambda_b, self.flatness)?
        };
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub model: ModelTask,
    pub density: DensityTask,
    pub decay_scan: DecayScanTask,
    pub resonance: ResonanceTask,
    pub corput: CorputTask,
    pub lemma_main: LemmaMainTask,
    pub gevrey_verify: GevreyTask,
    pub kronecker: KroneckerTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelTask {
    pub lambda_points: usize,
}

impl Default for ModelTask {
    fn default() -> Self {
        Self { lambda_points: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityTask {
    /// Barrier after which to truncate; defaults to the last one.
    pub j: Option<usize>,
    pub lambda_points: usize,
    pub mass_tolerance: f64,
}

impl Default for DensityTask {
    fn default() -> Self {
        Self {
            j: None,
            lambda_points: 512,
            mass_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayScanTask {
    pub window: WindowSpec,
    pub j: Option<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub annotate: bool,
}

impl Default for DecayScanTask {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            j: None,
            t_min: 2.0,
            t_max: 1e3,
            t_points: 24,
            annotate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceTask {
    pub window: WindowSpec,
    pub t_values: Vec<f64>,
}

impl Default for ResonanceTask {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            t_values: vec![10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorputTask {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub tau_points: usize,
    /// `τ` runs over `[−span·t, span·t]`.
    pub tau_span: f64,
    pub kappa_ratio: f64,
}

impl Default for CorputTask {
    fn default() -> Self {
        Self {
            lambda_a: 0.5,
            lambda_b: 1.5,
            t_min: 10.0,
            t_max: 1e4,
            t_points: 20,
            tau_points: 41,
            tau_span: 5.0,
            kappa_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaMainTask {
    pub measure: SyntheticMeasure,
    pub kappa_ratio: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub slope_max: f64,
    pub plancherel_points: usize,
    pub plancherel_t_max: f64,
    pub plancherel_tolerance: f64,
}

impl Default for LemmaMainTask {
    fn default() -> Self {
        Self {
            measure: SyntheticMeasure::SmoothBump {
                a: 0.5,
                b: 1.5,
                flatness: 0.0,
            },
            kappa_ratio: 0.5,
            t_min: 2.0,
            t_max: 1e4,
            t_points: 32,
            slope_max: 0.02,
            plancherel_points: 20,
            plancherel_t_max: 150.0,
            plancherel_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GevreyTask {
    pub m_max: usize,
    pub n_max: usize,
    pub delta: f64,
    pub k: f64,
    pub zero_term: ZeroTerm,
    pub phi_points: usize,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lemma_n_max: usize,
    pub lemma_k_max: usize,
}

impl Default for GevreyTask {
    fn default() -> Self {
        Self {
            m_max: 3,
            n_max: 12,
            delta: 0.125,
            k: K_WITHOUT_ZERO_TERM,
            zero_term: ZeroTerm::Zero,
            phi_points: 17,
            lambda_a: 0.5,
            lambda_b: 1.5,
            lemma_n_max: 10_000,
            lemma_k_max: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KroneckerTask {
    pub window: WindowSpec,
    /// Truncation of `J` for the Minkowski check.
    pub l: usize,
    /// Truncation of `J` for the eigenvalue histogram.
    pub histogram_l: usize,
    pub bins: usize,
    pub j: Option<usize>,
    pub dt: f64,
    pub t_cap: f64,
    pub tail_tolerance: f64,
    pub lambda_points: usize,
    pub ks_tolerance: f64,
    pub minkowski_tolerance: f64,
}

impl Default for KroneckerTask {
    fn default() -> Self {
        Self {
            window: WindowSpec {
                lambda_a: -1.5,
                lambda_b: 1.5,
                flatness: 0.0,
                wide: true,
            },
            l: 256,
            histogram_l: 1024,
            bins: 200,
            j: None,
            dt: 0.5,
            t_cap: 1e5,
            tail_tolerance: 1e-16,
            lambda_points: 401,
            ks_tolerance: 0.05,
            minkowski_tolerance: 1e-12,
        }
    }
}

/// Parses `key.path=value`; the value is read as TOML, falling back to a
/// bare string.
fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {text:?} is not KEY=VALUE")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!(
            "override key {key:?} has an empty segment"
        )));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_owned()));
    Ok((path, value))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut current = table;
    for (depth, segment) in parents.iter().enumerate() {
        let entry = current
            .entry(segment.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("{}: not a table", path[..=depth].join(".")))
        })?;
    }
    current.insert(last.clone(), value);
    Ok(())
}

/// Reads, overrides and validates a configuration.
pub fn load(
    path: &Path,
    overrides: &[String],
    env: impl Fn(&str) -> Option<String>,
) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for text in overrides {
        let (key, value) = parse_override(text)?;
        set_path(&mut table, &key, value)?;
    }
    if let Some(threads) = env(THREADS_VAR) {
        let count: i64 = threads.trim().parse().map_err(|_| {
            CliError::Config(format!("{THREADS_VAR}={threads:?} is not an integer"))
        })?;
        set_path(
            &mut table,
            &["numerics".into(), "threads".into()],
            count.into(),
        )?;
    }
    if let Some(precision) = env(PRECISION_VAR) {
        set_path(
            &mut table,
            &["numerics".into(), "precision".into()],
            toml::Value::String(precision.trim().to_ascii_lowercase()),
        )?;
    }
    let config: RunConfig =
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let at = e.path().to_string();
            CliError::Config(format!("{at}: {}", e.into_inner()))
        })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.model.p > 0.0 && self.model.p <= 1.0) {
            return Err(CliError::Config(format!(
                "model.p: {} must lie in (0, 1]",
                self.model.p
            )));
        }
        if self.numerics.threads == 0 {
            return Err(CliError::Config(
                "numerics.threads: must be positive".into(),
            ));
        }
        if !(self.numerics.tolerance > 0.0) {
            return Err(CliError::Config(
                "numerics.tolerance: must be positive".into(),
            ));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats: empty".into()));
        }
        self.model.spec()?;
        Ok(())
    }
}
