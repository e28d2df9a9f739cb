//! Absolutely continuous approximants of the spectral measure of `δ_0` and
//! integrals of smooth test functions against them.
//!
//! At truncation `N` the density with respect to `dλ` is
//! `(1/π)·Im w(λ) / |y_N − w y_{N+1}|²`. Substituting `λ = 2cos φ` turns
//! `∫ F dρ_N` into `(2/π)∫ F(2cos φ)·sin²φ / |y_N − w y_{N+1}|² dφ`.

use std::f64::consts::{FRAC_1_PI, PI};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prufer_transfer::{boundary_modulus_squared, phi_of_lambda};
use crate::quadrature::{adaptive_local, FilonSampler, QuadratureKind, Rule};
use crate::sparse_model::SparseModel;

/// `w(λ) = λ/2 + i√(1 − λ²/4)`.
pub fn herglotz_w(lambda: f64) -> Result<Complex64> {
    if !(lambda.abs() <= 2.0) {
        return Err(Error::Domain(format!("|λ| = {} exceeds 2", lambda.abs())));
    }
    Ok(Complex64::new(
        lambda / 2.0,
        (1.0 - lambda * lambda / 4.0).max(0.0).sqrt(),
    ))
}

/// Semicircle density `√(4 − λ²)/(2π)` of the free operator.
pub fn free_density(lambda: f64) -> f64 {
    if lambda.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - lambda * lambda).sqrt() / (2.0 * PI)
    }
}

/// Density of `dρ_N` with respect to `dλ` at `λ`.
pub fn ac_density(n: &BigUint, lambda: f64, model: &SparseModel) -> Result<f64> {
    let phi = phi_of_lambda(lambda)?;
    ac_density_phi(n, phi, model)
}

/// Density of `dρ_N` with respect to `dλ` at `λ = 2cos φ`.
pub fn ac_density_phi(n: &BigUint, phi: f64, model: &SparseModel) -> Result<f64> {
    let modulus = if model.is_free() {
        1.0
    } else {
        boundary_modulus_squared(n, phi, model)?
    };
    Ok(FRAC_1_PI * phi.sin() / modulus)
}

/// Highest angular frequency (per unit `φ`) at which the density varies,
/// taken as twice the last barrier position at or below `N`.
pub fn model_frequency(n: &BigUint, model: &SparseModel) -> f64 {
    if model.is_free() {
        return 0.0;
    }
    let count = model.barriers.count_up_to(n);
    if count == 0 {
        return 0.0;
    }
    2.0 * model.barriers.positions()[count - 1]
        .to_f64()
        .unwrap_or(f64::INFINITY)
}

/// The density sampled on a λ-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityApproximation {
    pub truncation: String,
    pub lambda_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub quadrature: QuadratureKind,
    pub nodes: usize,
    pub mass: f64,
    pub mass_error: f64,
}

/// Samples the density on `grid` and computes its total mass.
pub fn density_on_grid(
    n: &BigUint,
    grid: &[f64],
    model: &SparseModel,
    kind: QuadratureKind,
    tol: f64,
) -> Result<DensityApproximation> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("λ grid must be strictly increasing".into()));
    }
    let values = grid
        .iter()
        .map(|&l| ac_density(n, l, model))
        .collect::<Result<Vec<_>>>()?;
    let mass = total_mass(n, model, kind, tol)?;
    Ok(DensityApproximation {
        truncation: n.to_str_radix(10),
        lambda_grid: grid.to_vec(),
        values,
        quadrature: kind,
        nodes: mass.1,
        mass: mass.0.value,
        mass_error: mass.0.error,
    })
}

fn rule_for(kind: QuadratureKind, order: usize) -> Rule {
    match kind {
        QuadratureKind::GaussLegendre => Rule::gauss_legendre(order),
        QuadratureKind::ClenshawCurtis => Rule::clenshaw_curtis(order + order % 2),
    }
}

/// Total mass of `dρ_N`, integrated in the `φ` variable; returns the
/// estimate and the number of nodes of the final composite rule.
pub fn total_mass(
    n: &BigUint,
    model: &SparseModel,
    kind: QuadratureKind,
    tol: f64,
) -> Result<(crate::quadrature::Estimate<f64>, usize)> {
    let order = 20;
    let rule = rule_for(kind, order);
    let frequency = model_frequency(n, model);
    let initial = panel_count(PI, frequency, 0.0);
    let integrand = |phi: f64| -> f64 {
        let s = phi.sin();
        match ac_density_phi(n, phi, model) {
            Ok(d) => 2.0 * s * d,
            Err(_) => f64::NAN,
        }
    };
    let est = adaptive_local(&rule, 0.0, PI, initial, MAX_DEPTH, tol, &integrand)?;
    if !est.value.is_finite() {
        return Err(Error::Domain(
            "density evaluation failed inside (0, π)".into(),
        ));
    }
    let nodes = est.evaluations;
    Ok((est, nodes))
}

/// Bisection depth limit of the adaptive rules.
const MAX_DEPTH: u32 = 30;

/// `C^∞` step `S(x) = ψ(x)/(ψ(x) + ψ(1 − x))` with `ψ(x) = e^{−1/x}`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Flat-top smooth bump with compact support `[center − half_width,
/// center + half_width]`; `flatness ∈ [0, 1)` is the fraction of the
/// half-width on which it equals 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: f64,
    pub half_width: f64,
    pub flatness: f64,
}

impl TestFunction {
    /// A bump supported in `[λ_a, λ_b] ⊂ (−2, 0) ∪ (0, 2)`.
    pub fn new(lambda_a: f64, lambda_b: f64, flatness: f64) -> Result<Self> {
        let f = Self::wide(lambda_a, lambda_b, flatness)?;
        if lambda_a <= 0.0 && 0.0 <= lambda_b {
            return Err(Error::Domain(format!(
                "support [{lambda_a}, {lambda_b}] contains λ = 0"
            )));
        }
        Ok(f)
    }

    /// A bump on `[λ_a, λ_b] ⊂ (−2, 2)` that may contain `λ = 0`.
    pub fn wide(lambda_a: f64, lambda_b: f64, flatness: f64) -> Result<Self> {
        if !(-2.0 < lambda_a && lambda_a < lambda_b && lambda_b < 2.0) {
            return Err(Error::Domain(format!(
                "support [{lambda_a}, {lambda_b}] must lie inside (−2, 2)"
            )));
        }
        if !(0.0..1.0).contains(&flatness) {
            return Err(Error::Domain(format!("flatness {flatness} outside [0, 1)")));
        }
        Ok(Self {
            center: 0.5 * (lambda_a + lambda_b),
            half_width: 0.5 * (lambda_b - lambda_a),
            flatness,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    /// Support as an interval of `φ` (increasing).
    pub fn phi_support(&self) -> (f64, f64) {
        let (a, b) = self.support();
        ((b / 2.0).acos(), (a / 2.0).acos())
    }

    pub fn value(&self, lambda: f64) -> f64 {
        let distance = (lambda - self.center).abs();
        let ramp = self.half_width * (1.0 - self.flatness);
        smooth_step((self.half_width - distance) / ramp)
    }
}

/// Which weight multiplies `|f|²` under the measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// `|f(λ)|²`.
    Square,
    /// `|f(λ)|² e^{itλ}`.
    Oscillating { t: f64 },
}

impl Weight {
    pub fn frequency(&self) -> f64 {
        match self {
            Weight::Square => 0.0,
            Weight::Oscillating { t } => *t,
        }
    }
}

/// Accuracy controls for [`integrate_against`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Absolute tolerance of each quadrature route.
    pub tolerance: f64,
    /// Largest acceptable difference between the λ-form and φ-form values.
    pub agreement: f64,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Upper bound on the number of panels.
    pub max_panels: usize,
    /// Above this `|t|` the λ-form uses the Filon rule.
    pub filon_threshold: f64,
    /// Evaluate the φ-form even above the Filon threshold.
    pub cross_check: bool,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            agreement: 1e-9,
            order: 20,
            max_panels: 1 << 22,
            filon_threshold: 1e3,
            cross_check: true,
        }
    }
}

/// Result of [`integrate_against`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub value: Complex64,
    pub lambda_form: Complex64,
    pub phi_form: Option<Complex64>,
    pub error_estimate: f64,
    pub filon: bool,
}

/// `∫ |f|² · weight dρ_N`, evaluated in the λ variable and, as a
/// cross-check, in the φ variable.
pub fn integrate_against(
    f: &TestFunction,
    n: &BigUint,
    model: &SparseModel,
    weight: Weight,
    options: &QuadratureOptions,
) -> Result<IntegralEstimate> {
    let t = weight.frequency();
    let (la, lb) = f.support();
    let (pa, pb) = f.phi_support();
    let rule = Rule::gauss_legendre(options.order);
    let nu_phi = model_frequency(n, model);
    // largest |dφ/dλ| on the support
    let stretch = 1.0 / (2.0 * pa.sin().min(pb.sin()));
    let use_filon = t.abs() > options.filon_threshold;

    let density_weight = |lambda: f64| -> f64 {
        let fv = f.value(lambda);
        if fv == 0.0 {
            return 0.0;
        }
        match ac_density(n, lambda, model) {
            Ok(d) => fv * fv * d,
            Err(_) => f64::NAN,
        }
    };

    let (lambda_form, lambda_error) = if use_filon {
        let panels = panel_count(lb - la, nu_phi * stretch, 0.0);
        filon_lambda(la, lb, panels, options, t, &density_weight)?
    } else {
        let initial = panel_count(lb - la, nu_phi * stretch, t);
        let integrand = |lambda: f64| Complex64::from_polar(density_weight(lambda), t * lambda);
        let est = adaptive_local(
            &rule,
            la,
            lb,
            initial,
            MAX_DEPTH,
            options.tolerance,
            &integrand,
        )?;
        (est.value, est.error)
    };

    let phi_form = if !use_filon || options.cross_check {
        let integrand = |phi: f64| {
            let lambda = 2.0 * phi.cos();
            let fv = f.value(lambda);
            if fv == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let s = phi.sin();
            let d = ac_density_phi(n, phi, model).unwrap_or(f64::NAN);
            Complex64::from_polar(2.0 * s * fv * fv * d, t * lambda)
        };
        let initial = panel_count(pb - pa, nu_phi, 2.0 * t);
        let est = adaptive_local(
            &rule,
            pa,
            pb,
            initial,
            MAX_DEPTH,
            options.tolerance,
            &integrand,
        )?;
        Some((est.value, est.error))
    } else {
        None
    };

    if !lambda_form.re.is_finite() || !lambda_form.im.is_finite() {
        return Err(Error::Domain("integrand evaluation failed".into()));
    }
    let mut error_estimate = lambda_error;
    if let Some((phi_value, phi_error)) = phi_form {
        let gap = (phi_value - lambda_form).norm();
        if gap > options.agreement {
            return Err(Error::Tolerance {
                what: format!("λ-form vs φ-form agreement at t = {t}"),
                achieved: gap,
                requested: options.agreement,
            });
        }
        error_estimate = error_estimate.max(phi_error).max(gap);
    }
    let value = match (use_filon, phi_form) {
        (false, Some((phi_value, _))) => phi_value,
        _ => lambda_form,
    };
    Ok(IntegralEstimate {
        value,
        lambda_form,
        phi_form: phi_form.map(|(v, _)| v),
        error_estimate,
        filon: use_filon,
    })
}

/// Panels so that each spans at most about one period of the fastest
/// oscillation.
fn panel_count(length: f64, model_frequency: f64, t: f64) -> usize {
    let frequency = model_frequency + t.abs() + 1.0;
    ((length * frequency / PI).ceil() as usize).max(4)
}

fn filon_lambda(
    a: f64,
    b: f64,
    initial_panels: usize,
    options: &QuadratureOptions,
    t: f64,
    g: &(impl Fn(f64) -> f64 + Sync),
) -> Result<(Complex64, f64)> {
    let mut panels = initial_panels;
    let mut previous = FilonSampler::new(a, b, panels, options.order, g).fourier(t);
    loop {
        panels *= 2;
        let next = FilonSampler::new(a, b, panels, options.order, g).fourier(t);
        let error = (next - previous).norm();
        if error <= options.tolerance {
            return Ok((next, error));
        }
        if panels * 2 > options.max_panels {
            return Err(Error::Tolerance {
                what: format!("Filon quadrature at t = {t}"),
                achieved: error,
                requested: options.tolerance,
            });
        }
        previous = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_model::SparsenessSpec;
    use num_traits::One;

    #[test]
    fn herglotz_values() {
        assert!((herglotz_w(0.0).unwrap() - Complex64::i()).norm() < 1e-15);
        for i in 0..1000 {
            let lambda = -2.0 + 4.0 * i as f64 / 999.0;
            let w = herglotz_w(lambda).unwrap();
            assert!((w.norm() - 1.0).abs() < 1e-12);
            assert!(w.im >= 0.0);
        }
        let phi = 0.77;
        let w = herglotz_w(2.0 * f64::cos(phi)).unwrap();
        assert!((w - Complex64::from_polar(1.0, phi)).norm() < 1e-14);
        assert!(herglotz_w(2.1).is_err());
    }

    #[test]
    fn free_density_is_semicircle_for_any_truncation() {
        let free = SparseModel::free();
        for n in [0u64, 10, 1000, 123_456_789] {
            for i in 1..100 {
                let lambda = -2.0 + 4.0 * i as f64 / 100.0;
                let d = ac_density(&BigUint::from(n), lambda, &free).unwrap();
                assert!((d - free_density(lambda)).abs() < 1e-12);
            }
        }
        assert!((ac_density(&BigUint::from(7u32), 0.0, &free).unwrap() - FRAC_1_PI).abs() < 1e-15);
    }

    #[test]
    fn free_mass_is_one() {
        let free = SparseModel::free();
        for kind in [
            QuadratureKind::GaussLegendre,
            QuadratureKind::ClenshawCurtis,
        ] {
            let (mass, _) = total_mass(&BigUint::from(10u32), &free, kind, 1e-13).unwrap();
            assert!((mass.value - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sparse_mass_is_one() {
        let model = SparseModel::from_spec(&SparsenessSpec::geometric(4, 4), 0.5).unwrap();
        let n = model.truncation_after(4).unwrap();
        let (mass, _) = total_mass(&n, &model, QuadratureKind::GaussLegendre, 1e-7).unwrap();
        assert!((mass.value - 1.0).abs() < 1e-6, "{}", mass.value);
    }

    #[test]
    fn bump_shape() {
        let f = TestFunction::new(0.5, 1.5, 0.5).unwrap();
        assert_eq!(f.value(0.5), 0.0);
        assert_eq!(f.value(1.0), 1.0);
        assert_eq!(f.value(1.2), 1.0);
        assert!(f.value(1.4) > 0.0 && f.value(1.4) < 1.0);
        assert!(TestFunction::new(-0.5, 0.5, 0.5).is_err());
        assert!(TestFunction::wide(-1.9, 1.9, 0.9).is_ok());
    }

    #[test]
    fn free_wide_bump_at_zero_time() {
        let f = TestFunction::wide(-1.8, 1.8, 0.8).unwrap();
        let free = SparseModel::free();
        let got = integrate_against(
            &f,
            &BigUint::one(),
            &free,
            Weight::Square,
            &QuadratureOptions::default(),
        )
        .unwrap();
        let rule = Rule::gauss_legendre(30);
        let direct = crate::quadrature::composite(&rule, -1.8, 1.8, 400, &|l: f64| {
            f.value(l).powi(2) * free_density(l)
        });
        assert!((got.value.re - direct).abs() < 1e-10);
        assert!(got.value.im.abs() < 1e-14);
        assert!(got.value.re > 0.0);
    }

    #[test]
    fn conjugation_symmetry_and_forms_agree() {
        let model = SparseModel::from_spec(&SparsenessSpec::geometric(4, 3), 0.6).unwrap();
        let n = model.truncation_after(3).unwrap();
        let f = TestFunction::new(0.4, 1.4, 0.3).unwrap();
        let opts = QuadratureOptions::default();
        let plus =
            integrate_against(&f, &n, &model, Weight::Oscillating { t: 37.0 }, &opts).unwrap();
        let minus =
            integrate_against(&f, &n, &model, Weight::Oscillating { t: -37.0 }, &opts).unwrap();
        assert!((plus.value - minus.value.conj()).norm() < 1e-12);
        assert!((plus.lambda_form - plus.phi_form.unwrap()).norm() < 1e-9);
    }

    #[test]
    fn filon_route_matches_gauss_route() {
        let model = SparseModel::from_spec(&SparsenessSpec::geometric(4, 2), 0.5).unwrap();
        let n = model.truncation_after(2).unwrap();
        let f = TestFunction::new(0.5, 1.5, 0.4).unwrap();
        let gauss = QuadratureOptions {
            filon_threshold: f64::INFINITY,
            ..QuadratureOptions::default()
        };
        let filon = QuadratureOptions {
            filon_threshold: 0.0,
            cross_check: false,
            ..QuadratureOptions::default()
        };
        for &t in &[5.0, 400.0, 2000.0] {
            let a = integrate_against(&f, &n, &model, Weight::Oscillating { t }, &gauss).unwrap();
            let b = integrate_against(&f, &n, &model, Weight::Oscillating { t }, &filon).unwrap();
            assert!((a.value - b.value).norm() < 1e-10, "t={t}");
        }
    }
}
