//! The computational subcommands.

use num_bigint::BigUint;
use serde_json::json;
use sparse_jacobi::fourier_decay::{
    decay_scan, kernel_grid, lemma_main_bound, log_grid, plancherel_check, resonance_info,
    CorputWindow, KernelRegime, MeasureTransform,
};
use sparse_jacobi::gevrey_calculus::{certify_gevrey, check_convolution_lemma, CellKind};
use sparse_jacobi::kronecker_sum::{
    convolution_density, direct_self_convolution, histogram_vs_convolution, minkowski_check,
    sample_gamma, truncated_couplings,
};
use sparse_jacobi::phase::biguint_to_f64;
use sparse_jacobi::sparse_model::{hausdorff_dim, r_factor, SparseModel};
use sparse_jacobi::spectral_measure::{density_on_grid, free_density};

use crate::config::RunConfig;
use crate::output::{Check, Outcome, Table};
use crate::CliError;

/// Subcommands that compute something.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Model,
    Density,
    DecayScan,
    Resonance,
    Corput,
    LemmaMain,
    GevreyVerify,
    Kronecker,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Model => "model",
            Task::Density => "density",
            Task::DecayScan => "decay-scan",
            Task::Resonance => "resonance",
            Task::Corput => "corput",
            Task::LemmaMain => "lemma-main",
            Task::GevreyVerify => "gevrey-verify",
            Task::Kronecker => "kronecker",
        }
    }

    pub fn run(self, config: &RunConfig) -> Result<Outcome, CliError> {
        config.numerics.precision.ensure_available()?;
        let model = config.model.build()?;
        match self {
            Task::Model => model_table(config, &model),
            Task::Density => density(config, &model),
            Task::DecayScan => scan(config, &model),
            Task::Resonance => resonance(config, &model),
            Task::Corput => corput(config),
            Task::LemmaMain => lemma_main(config),
            Task::GevreyVerify => gevrey(config, &model),
            Task::Kronecker => kronecker(config, &model),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// `count` interior points of `(lo, hi)`.
fn interior_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
        .collect()
}

fn last_barrier(model: &SparseModel, requested: Option<usize>) -> Result<usize, CliError> {
    match requested {
        Some(j) => Ok(j),
        None if model.barriers.is_empty() => Err(CliError::Config(
            "model: this subcommand needs at least one barrier".into(),
        )),
        None => Ok(model.barriers.len()),
    }
}

fn model_table(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let barriers = &model.barriers;
    let mut positions = Table::new("positions", &["j", "increment", "position", "offset"]);
    for (index, ((increment, position), offset)) in barriers
        .increments()
        .iter()
        .zip(barriers.positions())
        .zip(barriers.offsets())
        .enumerate()
    {
        positions.push(vec![
            (index + 1).to_string(),
            increment.to_string(),
            position.to_string(),
            offset.to_string(),
        ]);
    }
    let mut dimensions = Table::new("dimensions", &["j", "lambda", "r", "hausdorff_dim"]);
    let grid = interior_grid(-2.0, 2.0, config.task.model.lambda_points);
    for (index, increment) in barriers.increments().iter().enumerate() {
        let beta = biguint_to_f64(increment);
        if beta <= 1.0 {
            continue;
        }
        for &lambda in &grid {
            dimensions.push(vec![
                (index + 1).to_string(),
                num(lambda),
                num(r_factor(model.p(), lambda)?),
                num(hausdorff_dim(model.p(), beta, lambda)?),
            ]);
        }
    }
    let family = &config.model.family;
    Ok(Outcome {
        checks: Vec::new(),
        tables: vec![positions, dimensions],
        notes: vec![format!("model regime: {}", family.regime().label())],
        data: json!({
            "p": model.p(),
            "positions": barriers.positions_decimal(),
            "observed_delta": barriers.observed_delta(),
            "declared_delta": family.declared_delta(),
        }),
    })
}

fn density(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let task = &config.task.density;
    let n = if model.barriers.is_empty() && task.j.is_none() {
        BigUint::from(1u32)
    } else {
        model.truncation_after(last_barrier(model, task.j)?)?
    };
    let grid = interior_grid(-2.0, 2.0, task.lambda_points);
    let approx = density_on_grid(
        &n,
        &grid,
        model,
        config.numerics.quadrature,
        config.numerics.tolerance,
    )?;
    let mut table = Table::new("density", &["lambda", "density", "semicircle"]);
    for (&lambda, &value) in approx.lambda_grid.iter().zip(&approx.values) {
        table.push(vec![num(lambda), num(value), num(free_density(lambda))]);
    }
    let mass_gap = (approx.mass - 1.0).abs();
    Ok(Outcome {
        checks: vec![Check::new(
            "total mass",
            mass_gap <= task.mass_tolerance,
            format!(
                "mass {} (|mass − 1| = {mass_gap:.3e}, tolerance {:.1e})",
                approx.mass, task.mass_tolerance
            ),
        )],
        tables: vec![table],
        notes: Vec::new(),
        data: json!({
            "truncation": approx.truncation,
            "mass": approx.mass,
            "mass_error": approx.mass_error,
            "nodes": approx.nodes,
        }),
    })
}

fn scan(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let task = &config.task.decay_scan;
    let f = task.window.test_function()?;
    let j = last_barrier(model, task.j)?;
    let grid = log_grid(task.t_min, task.t_max, task.t_points);
    let scan = decay_scan(&f, j, model, &grid, task.annotate)?;
    let mut table = Table::new(
        "scan",
        &[
            "t",
            "gamma_abs",
            "j_star",
            "n_star",
            "resonant_families",
            "critical_roots",
            "proxy_roots",
        ],
    );
    for ((&t, &gamma), mark) in scan
        .t_grid
        .iter()
        .zip(&scan.gamma_abs)
        .zip(&scan.resonance_marks)
    {
        let marks = mark.as_ref().map_or_else(
            || vec![String::new(); 5],
            |info| {
                vec![
                    info.j_star.to_string(),
                    info.n_star.to_string(),
                    info.resonant_families().to_string(),
                    info.critical_phis.len().to_string(),
                    info.proxy_critical_phis.len().to_string(),
                ]
            },
        );
        let mut row = vec![num(t), num(gamma)];
        row.extend(marks);
        table.push(row);
    }
    Ok(Outcome {
        checks: Vec::new(),
        tables: vec![table],
        notes: vec!["the fitted exponent is reported for inspection, without a threshold".into()],
        data: json!({
            "truncation": model.truncation_after(j)?.to_string(),
            "gamma0": scan.gamma0,
            "fitted_exponent": scan.fitted_exponent,
            "half_width": scan.half_width,
            "fit_t_range": [scan.t_grid[scan.fit_window.start], scan.t_grid[scan.fit_window.end - 1]],
        }),
    })
}

fn resonance(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let task = &config.task.resonance;
    let window = task.window.test_function()?.phi_support();
    let mut roots = Table::new("roots", &["t", "kind", "l", "phi"]);
    let mut summary = Table::new(
        "resonance",
        &[
            "t",
            "j_star",
            "n_star",
            "bracket_closed",
            "critical_roots",
            "proxy_roots",
            "resonant_families",
        ],
    );
    let (mut proxy_ok, mut families_ok, mut excess) = (true, true, Vec::new());
    for &t in &task.t_values {
        let info = resonance_info(t, model, window)?;
        for (kind, list) in [
            ("measured", &info.critical_phis),
            ("proxy", &info.proxy_critical_phis),
        ] {
            for root in list {
                roots.push(vec![num(t), kind.into(), root.l.to_string(), num(root.phi)]);
            }
        }
        proxy_ok &= info.proxy_critical_phis.len() as u64 <= info.n_star;
        families_ok &= info.resonant_families() as u64 <= info.n_star;
        if info.critical_phis.len() as u64 > info.n_star {
            excess.push(t);
        }
        summary.push(vec![
            num(t),
            info.j_star.to_string(),
            info.n_star.to_string(),
            info.bracket_closed.to_string(),
            info.critical_phis.len().to_string(),
            info.proxy_critical_phis.len().to_string(),
            info.resonant_families().to_string(),
        ]);
    }
    let mut notes = Vec::new();
    if !excess.is_empty() {
        notes.push(format!(
            "measured root count exceeds n* at t = {excess:?}; θ' differs from β on the window"
        ));
    }
    Ok(Outcome {
        checks: vec![
            Check::new(
                "proxy roots ≤ n*",
                proxy_ok,
                "roots with θ' replaced by β_{j*}",
            ),
            Check::new(
                "resonant families ≤ n*",
                families_ok,
                "distinct l with a measured root",
            ),
        ],
        tables: vec![summary, roots],
        notes,
        data: json!({ "t_values": task.t_values }),
    })
}

fn corput(config: &RunConfig) -> Result<Outcome, CliError> {
    let task = &config.task.corput;
    let window = CorputWindow::new(task.lambda_a, task.lambda_b)?;
    let multipliers: Vec<f64> = (0..task.tau_points)
        .map(|i| {
            -task.tau_span + 2.0 * task.tau_span * i as f64 / (task.tau_points.max(2) - 1) as f64
        })
        .collect();
    let grid = log_grid(task.t_min, task.t_max, task.t_points);
    let report = kernel_grid(&grid, &multipliers, task.kappa_ratio, window)?;
    let mut table = Table::new(
        "kernel",
        &[
            "t",
            "tau",
            "kappa",
            "abs_kernel",
            "quadrature_error",
            "regime",
            "bound_small_tau",
            "bound_small_tau_inf",
            "bound_large_tau",
            "delta_cutoff",
        ],
    );
    for s in &report.samples {
        table.push(vec![
            num(s.t),
            num(s.tau),
            num(s.kappa),
            num(s.lambda.norm()),
            num(s.quadrature_error),
            match s.regime {
                KernelRegime::SmallTau => "small_tau".into(),
                KernelRegime::LargeTau => "large_tau".into(),
            },
            num(s.bound_small_tau),
            num(s.bound_small_tau_inf),
            num(s.bound_large_tau),
            num(s.delta_cutoff),
        ]);
    }
    let violations = report.small_tau_violations + report.large_tau_violations;
    Ok(Outcome {
        checks: vec![Check::new(
            "kernel bounds",
            violations == 0,
            format!(
                "{} small-τ and {} large-τ violations over {} samples",
                report.small_tau_violations,
                report.large_tau_violations,
                report.samples.len()
            ),
        )],
        tables: vec![table],
        notes: Vec::new(),
        data: json!({
            "k_prime": report.k_prime,
            "measured_k_prime": report.measured_k_prime,
        }),
    })
}

fn lemma_main(config: &RunConfig) -> Result<Outcome, CliError> {
    let task = &config.task.lemma_main;
    let grid = log_grid(task.t_min, task.t_max, task.t_points);
    let report = lemma_main_bound(&task.measure, task.kappa_ratio, &grid)?;
    let mut rows = Table::new(
        "lemma",
        &["t", "gamma_abs", "quadrature_error", "ratio", "resolved"],
    );
    for r in &report.rows {
        rows.push(vec![
            num(r.t),
            num(r.gamma_abs),
            num(r.quadrature_error),
            num(r.ratio),
            r.resolved.to_string(),
        ]);
    }
    let transform = MeasureTransform::new(&task.measure, 1e-14)?;
    let mut plancherel = Table::new(
        "plancherel",
        &[
            "t",
            "kappa",
            "direct_re",
            "direct_im",
            "plancherel_re",
            "plancherel_im",
            "relative_difference",
            "tau_max",
        ],
    );
    let mut worst: f64 = 0.0;
    for t in log_grid(task.t_min, task.plancherel_t_max, task.plancherel_points) {
        let check = plancherel_check(
            &task.measure,
            &transform,
            t,
            task.kappa_ratio * t,
            config.numerics.tolerance,
        )?;
        worst = worst.max(check.relative_difference);
        plancherel.push(vec![
            num(t),
            num(check.kappa),
            num(check.direct.re),
            num(check.direct.im),
            num(check.plancherel.re),
            num(check.plancherel.im),
            num(check.relative_difference),
            num(check.t_max),
        ]);
    }
    Ok(Outcome {
        checks: vec![
            Check::new(
                "bounded ratio",
                report.sup_ratio.is_finite(),
                format!("sup |γ|√t/ln t = {}", report.sup_ratio),
            ),
            Check::new(
                "trend slope",
                report.trend_slope <= task.slope_max,
                format!(
                    "slope {} over {} resolved rows (limit {})",
                    report.trend_slope, report.resolved_rows, task.slope_max
                ),
            ),
            Check::new(
                "Plancherel route",
                worst <= task.plancherel_tolerance,
                format!(
                    "largest relative difference {worst:.3e} (limit {:.1e})",
                    task.plancherel_tolerance
                ),
            ),
        ],
        tables: vec![rows, plancherel],
        notes: Vec::new(),
        data: json!({
            "sup_ratio": report.sup_ratio,
            "trend_slope": report.trend_slope,
            "resolved_rows": report.resolved_rows,
        }),
    })
}

fn gevrey(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let task = &config.task.gevrey_verify;
    let lemma =
        check_convolution_lemma(task.k, task.zero_term, task.lemma_n_max, task.lemma_k_max)?;
    let lemma_detail = match lemma.witness {
        Some((k, n)) if !lemma.passed => format!("K = {} fails at cell k = {k}, n = {n}", task.k),
        _ => format!(
            "K = {} holds for n ≤ {}, k ≤ {} (worst margin {:.3e})",
            task.k, task.lemma_n_max, task.lemma_k_max, lemma.worst_margin
        ),
    };
    let (lo, hi) = ((task.lambda_b / 2.0).acos(), (task.lambda_a / 2.0).acos());
    let count = task.phi_points.max(2);
    let grid: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect();
    let cert = certify_gevrey(&grid, model, task.m_max, task.n_max, task.delta, task.k)?;
    let mut cells = Table::new(
        "cells",
        &["m", "n", "kind", "value", "bound", "margin", "passed"],
    );
    for c in &cert.cells {
        cells.push(vec![
            c.m.to_string(),
            c.n.to_string(),
            match c.kind {
                CellKind::FirstDerivative => "first_derivative".into(),
                CellKind::Higher => "higher".into(),
                CellKind::Linear => "linear".into(),
            },
            num(c.value),
            num(c.bound),
            num(c.margin),
            c.passed.to_string(),
        ]);
    }
    let mut smallness = Table::new("smallness", &["n", "lhs", "holds"]);
    for row in &cert.smallness {
        smallness.push(vec![row.n.to_string(), num(row.lhs), row.holds.to_string()]);
    }
    let failing: Vec<String> = cert
        .failing_cells()
        .map(|c| format!("(m = {}, n = {})", c.m, c.n))
        .collect();
    let certificate_detail = if cert.partial {
        "jet coefficients overflowed; certificate is partial".to_owned()
    } else if failing.is_empty() {
        format!("{} cells hold", cert.cells.len())
    } else {
        format!("failing cells {}", failing.join(", "))
    };
    let mut notes = Vec::new();
    if cert.smallness.iter().any(|r| !r.holds) {
        notes.push("the smallness condition on δ is violated for some n (reported only)".into());
    }
    Ok(Outcome {
        checks: vec![
            Check::new("convolution lemma", lemma.passed, lemma_detail),
            Check::new("derivative certificate", cert.passed, certificate_detail),
        ],
        tables: vec![cells, smallness],
        notes,
        data: json!({
            "convolution_lemma": lemma,
            "certificate": cert,
        }),
    })
}

fn kronecker(config: &RunConfig, model: &SparseModel) -> Result<Outcome, CliError> {
    let task = &config.task.kronecker;
    let f = task.window.test_function()?;
    let offdiag = truncated_couplings(task.l, model)?;
    let minkowski = minkowski_check(&offdiag, 64)?;
    let j = last_barrier(model, task.j)?;
    let samples = sample_gamma(&f, j, model, task.dt, task.t_cap, task.tail_tolerance)?;
    let grid = interior_grid(-4.0, 4.0, task.lambda_points);
    let density = convolution_density(&samples, &grid)?;
    let mut checks = vec![Check::new(
        "Minkowski sums",
        minkowski.passed(task.minkowski_tolerance),
        format!(
            "L = {}: pair residual ≤ {:.2e}, orthogonality defect {:.2e}, sampled residual {:.2e}",
            minkowski.l,
            minkowski.pair_residual_bound,
            minkowski.orthogonality_defect,
            minkowski.sampled_kronecker_residual
        ),
    )];
    let lowest = density.values.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "density positivity",
        lowest >= -1e-8,
        format!("minimum {lowest:.3e}"),
    ));
    let mut table = Table::new("convolution", &["lambda", "transform", "direct"]);
    let direct: Vec<Option<f64>> = if model.is_free() {
        let g = |x: f64| f.value(x).powi(2) * free_density(x);
        grid.iter()
            .map(|&lambda| Some(direct_self_convolution(&g, f.support(), lambda)))
            .collect()
    } else {
        vec![None; grid.len()]
    };
    let mut worst: f64 = 0.0;
    for ((&lambda, &value), reference) in grid.iter().zip(&density.values).zip(&direct) {
        if let Some(r) = reference {
            worst = worst.max((value - r).abs());
        }
        table.push(vec![
            num(lambda),
            num(value),
            reference.map(num).unwrap_or_default(),
        ]);
    }
    if model.is_free() {
        checks.push(Check::new(
            "direct self-convolution",
            worst <= 1e-4,
            format!("L∞ difference {worst:.3e}"),
        ));
    }
    let comparison = histogram_vs_convolution(task.histogram_l, model, &f, task.bins, &samples)?;
    checks.push(Check::new(
        "eigenvalue histogram",
        comparison.ks_distance <= task.ks_tolerance,
        format!(
            "KS distance {:.4} at L = {} (limit {})",
            comparison.ks_distance, task.histogram_l, task.ks_tolerance
        ),
    ));
    let mut histogram = Table::new("histogram", &["lambda", "histogram"]);
    for (&lambda, &value) in comparison
        .histogram
        .lambda_grid
        .iter()
        .zip(&comparison.histogram.values)
    {
        histogram.push(vec![num(lambda), num(value / comparison.histogram.mass)]);
    }
    let mut l2 = Table::new("l2_indicator", &["t", "cumulative"]);
    for (k, value) in samples.cumulative_l2().iter().enumerate() {
        l2.push(vec![num(k as f64 * samples.dt), num(*value)]);
    }
    Ok(Outcome {
        checks,
        tables: vec![table, histogram, l2],
        notes: vec![format!(
            "absolute continuity in the asymptotic regime is not desk-verifiable; \
             the L² indicator ∫|γ|² over |t| ≤ {} is {}",
            samples.t_max(),
            density.l2_indicator.unwrap_or(f64::NAN)
        )],
        data: json!({
            "minkowski": minkowski,
            "l2_indicator": density.l2_indicator,
            "mass": density.mass,
            "ks_distance": comparison.ks_distance,
            "tail_t_max": samples.t_max(),
            "direct_linf": if model.is_free() { Some(worst) } else { None },
        }),
    })
}
