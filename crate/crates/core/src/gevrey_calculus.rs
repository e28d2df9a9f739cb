//! Taylor jets of Prüfer angles and radii in `φ`, and the factorially
//! weighted derivative bounds built on them.

use std::f64::consts::{PI, TAU};

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{factorial, scott_compose, sin_cos_coeffs, TaylorJet};
use crate::phase::reduce_multiple;
use crate::prufer_transfer::{barrier_angle_map, prufer_trajectory};
use crate::sparse_model::{Regime, SparseModel};

/// `3/(2π²)`, the largest admissible `K` when `C_0 = 0`.
pub const K_WITHOUT_ZERO_TERM: f64 = 3.0 / (2.0 * PI * PI);

/// `1/(2 + 2π²/3)`, the largest admissible `K` when `C_0 = K`.
pub fn k_with_zero_term() -> f64 {
    1.0 / (2.0 + 2.0 * PI * PI / 3.0)
}

/// Arithmetic used for jet coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    #[default]
    Double,
    /// Quadruple-precision jets; not available in this build.
    Extended,
}

impl PrecisionMode {
    /// Errors for modes this build cannot run.
    pub fn ensure_available(self) -> Result<()> {
        match self {
            PrecisionMode::Double => Ok(()),
            PrecisionMode::Extended => Err(Error::Precision(
                "extended-precision jets are not available; use precision = \"double\"".into(),
            )),
        }
    }
}

impl std::str::FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "double" => Ok(PrecisionMode::Double),
            "extended" => Ok(PrecisionMode::Extended),
            other => Err(Error::InvalidSpec(format!(
                "precision mode {other:?} is neither \"double\" nor \"extended\""
            ))),
        }
    }
}

/// Whether `C_0` vanishes or equals `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroTerm {
    Zero,
    EqualsK,
}

/// `C_0 ∈ {0, K}`, `C_n = K/n²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CSequence {
    pub k: f64,
    pub zero_term: ZeroTerm,
}

impl CSequence {
    pub fn new(k: f64, zero_term: ZeroTerm) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("K = {k} must be positive")));
        }
        Ok(Self { k, zero_term })
    }

    pub fn get(&self, n: usize) -> f64 {
        match (n, self.zero_term) {
            (0, ZeroTerm::Zero) => 0.0,
            (0, ZeroTerm::EqualsK) => self.k,
            (n, _) => self.k / (n * n) as f64,
        }
    }

    pub fn values(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| self.get(n)).collect()
    }
}

/// Coefficients of `(a + b cos 2θ + c sin 2θ)/p² = A + B cos 2θ + C sin 2θ`
/// as jets in `φ`, with `κ = (1/p − p) cot φ`.
fn ratio_polynomial_jets(phi_jet: &TaylorJet, p: f64) -> Result<[TaylorJet; 3]> {
    let (sin, cos) = phi_jet.sin_cos();
    let kappa = cos.try_div(&sin)?.scale(1.0 / p - p);
    let k2 = kappa.try_mul(&kappa)?;
    let p2 = p * p;
    let a = &k2.scale(0.5) + 0.5 * (p2 + 1.0 / p2);
    let b = &k2.scale(-0.5) + 0.5 * (1.0 / p2 - p2);
    let c = kappa.scale(1.0 / p);
    Ok([a, b, c])
}

fn sin_cos_jet(angle: &TaylorJet) -> Result<(TaylorJet, TaylorJet)> {
    let (s, c) = sin_cos_coeffs(angle.value(), angle.order());
    Ok((scott_compose(&s, angle)?, scott_compose(&c, angle)?))
}

fn reduce_value(jet: &TaylorJet) -> TaylorJet {
    jet.with_value(jet.value().rem_euclid(TAU))
}

/// Jets in `φ` of the Prüfer angles `θ_0..θ_m` and of `ln R_m²`.
///
/// Constant terms of the angle jets are reduced modulo 2π; the higher
/// coefficients are exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruferJets {
    pub phi: f64,
    pub theta: Vec<TaylorJet>,
    pub log_radius: TaylorJet,
}

impl PruferJets {
    /// Jet of `1/R_m² = exp(−ln R_m²)`.
    pub fn inverse_radius(&self) -> TaylorJet {
        self.log_radius.scale(-1.0).exp()
    }
}

/// Jets of `θ_k`, `k = 0..=m`, built from
/// `θ_k = g(φ, θ_{k−1}) + β_k φ` by Scott composition, together with the
/// jet of `ln R_m² = Σ_k ln((a + b cos 2θ_k + c sin 2θ_k)/p²)`.
pub fn prufer_jet(phi: f64, model: &SparseModel, m: usize, order: usize) -> Result<PruferJets> {
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::Domain(format!("φ = {phi} must lie in (0, π)")));
    }
    let gaps = model.barriers.gaps();
    if m > gaps.len() {
        return Err(Error::Domain(format!(
            "jet of θ_{m} requested, model has {} barriers",
            gaps.len()
        )));
    }
    let p = model.p();
    let variable = TaylorJet::variable(phi, order);
    let coeffs = if model.is_free() {
        None
    } else {
        Some(ratio_polynomial_jets(&variable, p)?)
    };
    let mut theta = vec![variable.clone()];
    let mut log_radius = TaylorJet::constant(phi, 0.0, order);
    for (k, gap) in gaps.iter().take(m).enumerate() {
        let previous = &theta[k];
        let mapped = if k == 0 || model.is_free() {
            previous.clone()
        } else {
            barrier_map_jet(previous, &variable, p)?
        };
        let shift = reduce_multiple(gap, phi)?.angle;
        let mut next = &mapped + shift;
        if order >= 1 {
            next.coeffs[1] += gap.to_f64().unwrap_or(f64::INFINITY);
        }
        let next = reduce_value(&next);
        if let Some([a, b, c]) = &coeffs {
            let (s2, c2) = sin_cos_jet(&next.scale(2.0))?;
            let q = &(a + &(b * &c2)) + &(c * &s2);
            log_radius = &log_radius + &q.ln()?;
        }
        theta.push(next);
    }
    Ok(PruferJets {
        phi,
        theta,
        log_radius,
    })
}

/// Jet of the barrier map `θ ↦ atan2(p sin θ, cos θ/p + κ(φ) sin θ)`
/// applied to the angle jet `theta`, including the dependence of `κ` on
/// `φ`. The constant term follows the lift of [`barrier_angle_map`].
fn barrier_map_jet(theta: &TaylorJet, phi_jet: &TaylorJet, p: f64) -> Result<TaylorJet> {
    let (s, c) = sin_cos_jet(theta)?;
    let (sin_phi, cos_phi) = phi_jet.sin_cos();
    let kappa = cos_phi.try_div(&sin_phi)?.scale(1.0 / p - p);
    let x = s.scale(p);
    let y = &c.scale(1.0 / p) + &kappa.try_mul(&s)?;
    let jet = x.atan2(&y)?;
    Ok(jet.with_value(barrier_angle_map(theta.value(), phi_jet.value(), p)))
}

/// Jet in `θ` (at fixed `φ`) of the barrier map `g`.
pub fn barrier_map_theta_jet(theta: f64, phi: f64, p: f64, order: usize) -> Result<TaylorJet> {
    let variable = TaylorJet::variable(theta, order);
    let (s, c) = variable.sin_cos();
    let kappa = (1.0 / p - p) / phi.tan();
    let x = s.scale(p);
    let y = &c.scale(1.0 / p) + &s.scale(kappa);
    Ok(x.atan2(&y)?.with_value(barrier_angle_map(theta, phi, p)))
}

/// Jet in `θ` (at fixed `φ`) of `F(θ) = p²/(a + b cos 2θ + c sin 2θ)`.
pub fn ratio_theta_jet(theta: f64, phi: f64, p: f64, order: usize) -> Result<TaylorJet> {
    let phi_const = TaylorJet::constant(theta, phi, order);
    let [a, b, c] = ratio_polynomial_jets(&phi_const, p)?;
    let double = TaylorJet::variable(theta, order).scale(2.0);
    let (s2, c2) = double.sin_cos();
    (&(&a + &(&b * &c2)) + &(&c * &s2)).recip()
}

/// `θ_m(φ) − a_m φ`, evaluated from the trajectory as
/// `φ + Σ_{k=2}^{m} (g(θ_{k−1}) − θ_{k−1})`; bounded, hence suitable for
/// finite differences.
pub fn angle_residual(phi: f64, model: &SparseModel, m: usize) -> Result<f64> {
    let traj = prufer_trajectory(phi, model, m)?;
    let p = model.p();
    let sum: f64 = if model.is_free() {
        0.0
    } else {
        traj.theta[1..m.max(1)]
            .iter()
            .map(|t| barrier_angle_map(t.angle, phi, p) - t.angle)
            .sum()
    };
    Ok(phi + sum)
}

/// Outcome of the convolution check of the sequence `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolutionCheck {
    pub k: f64,
    pub zero_term: ZeroTerm,
    pub n_max: usize,
    pub k_max: usize,
    pub passed: bool,
    /// Smallest `1 − (C^{*k})_n / C_n` over all checked `(k, n)` with
    /// `C_n > 0`.
    pub worst_margin: f64,
    /// First failing `(k, n)`.
    pub witness: Option<(usize, usize)>,
    /// `sup_n (C∗C)_n / (K C_n)`.
    pub double_ratio_sup: f64,
    /// `n` attaining `double_ratio_sup`.
    pub double_ratio_argmax: usize,
}

/// Checks `C^{*k} ≤ C` pointwise for `k = 1..=k_max`, `n = 0..=n_max`.
pub fn check_convolution_lemma(
    k: f64,
    zero_term: ZeroTerm,
    n_max: usize,
    k_max: usize,
) -> Result<ConvolutionCheck> {
    if n_max > 10_000 {
        return Err(Error::ResourceLimit(format!("n_max = {n_max} exceeds 10⁴")));
    }
    let seq = CSequence::new(k, zero_term)?;
    let c = seq.values(n_max);
    let mut power = c.clone();
    let mut worst_margin = f64::INFINITY;
    let mut witness = None;
    let mut double_ratio = (0.0, 0);
    for fold in 2..=k_max.max(1) {
        if k_max < 2 {
            break;
        }
        power = convolve(&power, &c);
        for (n, (&value, &bound)) in power.iter().zip(&c).enumerate() {
            let fails = value > bound * (1.0 + 1e-12);
            if fails && witness.is_none() {
                witness = Some((fold, n));
            }
            if bound > 0.0 {
                worst_margin = worst_margin.min(1.0 - value / bound);
                if fold == 2 {
                    let ratio = value / (k * bound);
                    if ratio > double_ratio.0 {
                        double_ratio = (ratio, n);
                    }
                }
            }
        }
    }
    Ok(ConvolutionCheck {
        k,
        zero_term,
        n_max,
        k_max,
        passed: witness.is_none(),
        worst_margin,
        witness,
        double_ratio_sup: double_ratio.0,
        double_ratio_argmax: double_ratio.1,
    })
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|n| (0..=n).map(|i| a[i] * b[n - i]).sum())
        .collect()
}

/// The two routes to `f_n = (1/n!) (d/dφ ∘ ρ)^n f_0` at a point, plus the
/// unweighted partition sum as printed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IteratedParts {
    /// Operator iteration in jet arithmetic.
    pub direct: f64,
    /// Weighted partition sum.
    pub partition: f64,
    /// `Σ ρ^[k_1]⋯ρ^[k_n] f_0^[p]` over `k_1+…+k_n+p = n` without weights.
    pub unweighted: f64,
}

/// Evaluates `f_n` from the jets of `ρ` and `f_0` at a common point.
///
/// The partition route counts, for each composition
/// `(k_1, …, k_n, p)`, the ways the `n` derivatives can reach each factor:
/// the `j`-th outermost `ρ` can only be hit by the `j` outermost
/// derivatives, giving `Π_j C(j − Σ_{l<j} k_l, k_j)` placements, each
/// contributing `Π k_j! ρ^[k_j] · p! f_0^[p] / n!`.
pub fn iterated_parts_operator(rho: &TaylorJet, f0: &TaylorJet, n: usize) -> Result<IteratedParts> {
    for jet in [rho, f0] {
        if jet.order() < n {
            return Err(Error::OrderMismatch {
                expected: n,
                found: jet.order(),
            });
        }
    }
    if rho.base != f0.base {
        return Err(Error::BasePointMismatch(rho.base, f0.base));
    }
    let mut current = f0.truncate(n)?;
    for k in 0..n {
        let order = n - k;
        let product = rho.truncate(order)?.try_mul(&current)?;
        current = product.derivative()?.scale(1.0 / (k + 1) as f64);
    }
    let direct = current.value();

    let mut partition = 0.0;
    let mut unweighted = 0.0;
    let mut ks = Vec::with_capacity(n);
    enumerate_compositions(n, n, &mut ks, &mut |ks: &[usize]| {
        let used: usize = ks.iter().sum();
        let p = n - used;
        let plain: f64 = ks.iter().map(|&k| rho.coeffs[k]).product::<f64>() * f0.coeffs[p];
        unweighted += plain;
        let mut placements = 1.0;
        let mut taken = 0usize;
        for (j, &k) in ks.iter().enumerate() {
            let available = j + 1 - taken;
            if k > available {
                return;
            }
            placements *= binomial(available, k);
            taken += k;
        }
        let weights: f64 = ks.iter().map(|&k| factorial(k)).product::<f64>() * factorial(p);
        partition += placements * weights * plain / factorial(n);
    });
    Ok(IteratedParts {
        direct,
        partition,
        unweighted,
    })
}

fn enumerate_compositions(
    slots: usize,
    budget: usize,
    prefix: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if prefix.len() == slots {
        visit(prefix);
        return;
    }
    let used: usize = prefix.iter().sum();
    for k in 0..=budget - used {
        prefix.push(k);
        enumerate_compositions(slots, budget, prefix, visit);
        prefix.pop();
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Constants entering the derivative bounds, all measured on a `φ` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GevreyConstants {
    /// Sparseness ratio bound `β_{j−1}/β_j ≤ δ`.
    pub delta: f64,
    /// `K` of the sequence `C_n = K/n²`.
    pub k: f64,
    /// `sup |θ'_m/β_m − 1|`.
    pub derivative_spread: f64,
    /// `η = (1 + Δ)/(δK)`.
    pub eta: f64,
    /// Smallest `η̃` with `(i − 1)² η^i / i ≤ η̃^i` for all `i ≥ 1`.
    pub eta_tilde: f64,
    /// `η̂ = δ η̃²/(1 − Δ)`.
    pub eta_hat: f64,
    /// `d = δη̃/(δη̃ + Δ − 1)`.
    pub d: f64,
    /// Geometric decay rate of the barrier map's θ-jet.
    pub xi: f64,
    /// `c₁ = sup_k |g^[k]|/ξ^k`.
    pub c1: f64,
    /// Smallest `ζ` with `|F^[k]| ≤ ((1 − δ/ζ)/δ)(ζ/δ)^k`, if one exists.
    pub zeta: Option<f64>,
    /// `D = d·max(η̂, ζη)`.
    pub big_d: Option<f64>,
}

impl GevreyConstants {
    pub fn c(&self, n: usize) -> f64 {
        self.k / (n.max(1) * n.max(1)) as f64
    }
}

/// `sup_{i ≥ 1} ((i − 1)²/i)^{1/i}`, attained at `i = 6`.
pub fn eta_tilde_factor() -> f64 {
    (1..200)
        .map(|i| (((i - 1) * (i - 1)) as f64 / i as f64).powf(1.0 / i as f64))
        .fold(0.0, f64::max)
}

/// Which inequality a certificate cell checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// `|θ'_m| ≤ C_1 δ η β_m`.
    FirstDerivative,
    /// `|θ_m^[n]| ≤ C_n η^n β_{m−1}^n`, `m, n > 1`.
    Higher,
    /// `θ_1` is linear in `φ`; its higher coefficients vanish.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateCell {
    pub m: usize,
    pub n: usize,
    pub kind: CellKind,
    /// Largest `|θ_m^[n]|` over the grid.
    pub value: f64,
    pub bound: f64,
    /// `1 − value/bound`.
    pub margin: f64,
    pub passed: bool,
}

/// Smallness condition on `δ`:
/// `c₁ ξ/(ξ−1) (ξδ)^n / (1 − c₁ ξ δ^n) ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallnessRow {
    pub n: usize,
    pub lhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GevreyCertificate {
    pub p: f64,
    pub phi_grid: Vec<f64>,
    pub m_max: usize,
    pub n_max: usize,
    pub constants: GevreyConstants,
    pub cells: Vec<CertificateCell>,
    pub smallness: Vec<SmallnessRow>,
    /// `true` when every cell passed.
    pub passed: bool,
    /// `true` when a non-finite jet coefficient stopped the sweep early.
    pub partial: bool,
    pub regime: Regime,
}

impl GevreyCertificate {
    pub fn failing_cells(&self) -> impl Iterator<Item = &CertificateCell> {
        self.cells.iter().filter(|c| !c.passed)
    }
}

/// Largest `|θ'_m/β_m − 1|` over the grid and `m = 1..=m_max`, using the
/// order-1 jets.
pub fn measure_derivative_spread(
    phi_grid: &[f64],
    model: &SparseModel,
    m_max: usize,
) -> Result<f64> {
    let gaps = gap_values(model, m_max)?;
    let mut spread: f64 = 0.0;
    for &phi in phi_grid {
        let jets = prufer_jet(phi, model, m_max, 1)?;
        for m in 1..=m_max {
            spread = spread.max((jets.theta[m].coeffs[1] / gaps[m - 1] - 1.0).abs());
        }
    }
    Ok(spread)
}

fn gap_values(model: &SparseModel, m_max: usize) -> Result<Vec<f64>> {
    let gaps = model.barriers.gaps();
    if m_max > gaps.len() {
        return Err(Error::Domain(format!(
            "m = {m_max} exceeds the {} available barriers",
            gaps.len()
        )));
    }
    Ok(gaps
        .iter()
        .take(m_max)
        .map(|g| g.to_f64().unwrap_or(f64::INFINITY))
        .collect())
}

/// Measures `(ξ, c₁)` from `sup_{θ, φ} |g^[k]|`, `k = 1..=order`: `ξ` is the
/// largest ratio `s_{k+1}/s_k` over the upper half of the orders and
/// `c₁ = sup_k s_k/ξ^k`.
pub fn measure_map_decay(phi_grid: &[f64], p: f64, order: usize) -> Result<(f64, f64)> {
    let sup = sup_theta_jets(phi_grid, order, |theta, phi| {
        barrier_map_theta_jet(theta, phi, p, order)
    })?;
    let start = (order / 2).max(1);
    let xi = (start..order)
        .map(|k| sup[k + 1] / sup[k])
        .fold(0.0, f64::max);
    let c1 = (1..=order)
        .map(|k| sup[k] / xi.powi(k as i32))
        .fold(0.0, f64::max);
    Ok((xi, c1))
}

/// Smallest `ζ > δ` with `sup |F^[k]| ≤ ((1 − δ/ζ)/δ)(ζ/δ)^k` for
/// `k = 0..=order`, or `None` when `sup F ≥ 1/δ`.
pub fn measure_ratio_decay(
    phi_grid: &[f64],
    p: f64,
    delta: f64,
    order: usize,
) -> Result<Option<f64>> {
    let sup = sup_theta_jets(phi_grid, order, |theta, phi| {
        ratio_theta_jet(theta, phi, p, order)
    })?;
    if sup[0] >= 1.0 / delta {
        return Ok(None);
    }
    let holds = |zeta: f64| {
        sup.iter()
            .enumerate()
            .all(|(k, &s)| s <= (1.0 - delta / zeta) / delta * (zeta / delta).powi(k as i32))
    };
    let mut hi = 2.0 * delta;
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return Ok(None);
        }
    }
    let mut lo = delta;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Number of `θ` samples per `φ` when measuring suprema of θ-jets.
const THETA_SAMPLES: usize = 64;

fn sup_theta_jets(
    phi_grid: &[f64],
    order: usize,
    jet: impl Fn(f64, f64) -> Result<TaylorJet>,
) -> Result<Vec<f64>> {
    let mut sup = vec![0.0f64; order + 1];
    for &phi in phi_grid {
        for i in 0..THETA_SAMPLES {
            let theta = PI * i as f64 / THETA_SAMPLES as f64;
            let j = jet(theta, phi)?;
            for (s, c) in sup.iter_mut().zip(&j.coeffs) {
                *s = s.max(c.abs());
            }
        }
    }
    Ok(sup)
}

/// Measures all constants on the grid.
pub fn measure_constants(
    phi_grid: &[f64],
    model: &SparseModel,
    m_max: usize,
    delta: f64,
    k: f64,
    order: usize,
) -> Result<GevreyConstants> {
    let spread = measure_derivative_spread(phi_grid, model, m_max)?;
    let eta = (1.0 + spread) / (delta * k);
    let eta_tilde = eta_tilde_factor() * eta;
    let eta_hat = delta * eta_tilde * eta_tilde / (1.0 - spread);
    let d = delta * eta_tilde / (delta * eta_tilde + spread - 1.0);
    let p = model.p();
    let (xi, c1, zeta) = if model.is_free() {
        (0.0, 0.0, None)
    } else {
        let (xi, c1) = measure_map_decay(phi_grid, p, order.max(2))?;
        (xi, c1, measure_ratio_decay(phi_grid, p, delta, order)?)
    };
    let big_d = zeta.map(|z| d * eta_hat.max(z * eta));
    Ok(GevreyConstants {
        delta,
        k,
        derivative_spread: spread,
        eta,
        eta_tilde,
        eta_hat,
        d,
        xi,
        c1,
        zeta,
        big_d,
    })
}

/// Certifies `|θ'_m| ≤ C_1 δ η β_m` and `|θ_m^[n]| ≤ C_n η^n β_{m−1}^n`
/// for `m ≤ m_max`, `n ≤ n_max` on the grid, with `η` from the measured
/// spread of `θ'_m/β_m`.
pub fn certify_gevrey(
    phi_grid: &[f64],
    model: &SparseModel,
    m_max: usize,
    n_max: usize,
    delta: f64,
    k: f64,
) -> Result<GevreyCertificate> {
    if phi_grid.is_empty() || m_max == 0 || n_max == 0 {
        return Err(Error::Degenerate("empty certificate range".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("δ = {delta} must lie in (0, 1)")));
    }
    let constants = measure_constants(phi_grid, model, m_max, delta, k, n_max)?;
    let gaps = gap_values(model, m_max)?;
    let mut sup = vec![vec![0.0f64; n_max + 1]; m_max + 1];
    let mut partial = false;
    'grid: for &phi in phi_grid {
        let jets = prufer_jet(phi, model, m_max, n_max)?;
        for m in 1..=m_max {
            for n in 1..=n_max {
                let c = jets.theta[m].coeffs[n];
                if !c.is_finite() {
                    partial = true;
                    break 'grid;
                }
                sup[m][n] = sup[m][n].max(c.abs());
            }
        }
    }
    let mut cells = Vec::new();
    for m in 1..=m_max {
        for n in 1..=n_max {
            let (kind, bound) = if n == 1 {
                (
                    CellKind::FirstDerivative,
                    constants.c(1) * delta * constants.eta * gaps[m - 1],
                )
            } else if m == 1 {
                (CellKind::Linear, 0.0)
            } else {
                (
                    CellKind::Higher,
                    constants.c(n) * (constants.eta * gaps[m - 2]).powi(n as i32),
                )
            };
            let value = sup[m][n];
            // the n = 1 bound equals the measured sup by construction
            let passed = match kind {
                CellKind::Linear => value == 0.0 || value <= 1e-12 * gaps[0],
                _ => value <= bound * (1.0 + 1e-12),
            };
            let margin = if bound > 0.0 {
                1.0 - value / bound
            } else {
                0.0
            };
            cells.push(CertificateCell {
                m,
                n,
                kind,
                value,
                bound,
                margin,
                passed,
            });
        }
    }
    let smallness = (2..=n_max)
        .map(|n| {
            let GevreyConstants { c1, xi, .. } = constants;
            let denominator = 1.0 - c1 * xi * delta.powi(n as i32);
            let lhs = if xi > 1.0 && denominator > 0.0 {
                c1 * xi / (xi - 1.0) * (xi * delta).powi(n as i32) / denominator
            } else {
                f64::INFINITY
            };
            SmallnessRow {
                n,
                lhs,
                holds: lhs <= 1.0,
            }
        })
        .collect();
    let passed = cells.iter().all(|c| c.passed) && !partial;
    Ok(GevreyCertificate {
        p: model.p(),
        phi_grid: phi_grid.to_vec(),
        m_max,
        n_max,
        constants,
        cells,
        smallness,
        passed,
        partial,
        regime: Regime::DeskScale,
    })
}

/// One checked inequality of the combined estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub quantity: String,
    pub order: usize,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub passed: bool,
}

impl BoundRow {
    fn new(quantity: &str, order: usize, value: f64, bound: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            order,
            value,
            bound,
            margin: 1.0 - value / bound,
            passed: value <= bound,
        }
    }
}

/// Largest values over the grid of `|ρ^[k]|`, `|f_0^[k]|` and `|f_n|` with
/// `ρ = 1/θ'_{m+1}` and `f_0 = 1/R_m²`, against
/// `ρ^[k] ≤ (d/β_{m+1}) C_k η̂^k β_m^k`,
/// `f_0^[k] ≤ C_k (ζη)^k δ^{−m} β_m^k` and
/// `|f_n| ≤ C_n D^n δ^{−m} (β_m/β_{m+1})^n`.
pub fn combined_bound_check(
    phi_grid: &[f64],
    model: &SparseModel,
    m: usize,
    n: usize,
    constants: &GevreyConstants,
) -> Result<Vec<BoundRow>> {
    let (zeta, big_d) = match (constants.zeta, constants.big_d) {
        (Some(z), Some(d)) => (z, d),
        _ => return Err(Error::Degenerate("ζ and D are not available".into())),
    };
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let gaps = gap_values(model, m + 1)?;
    let (beta_m, beta_next) = (gaps[m - 1], gaps[m]);
    let mut rho_sup = vec![0.0f64; n + 1];
    let mut f0_sup = vec![0.0f64; n + 1];
    let mut fn_sup = 0.0f64;
    for &phi in phi_grid {
        let jets = prufer_jet(phi, model, m + 1, n + 1)?;
        let rho = jets.theta[m + 1].derivative()?.recip()?;
        let f0 = prufer_jet(phi, model, m, n)?.inverse_radius();
        for k in 0..=n {
            rho_sup[k] = rho_sup[k].max(rho.coeffs[k].abs());
            f0_sup[k] = f0_sup[k].max(f0.coeffs[k].abs());
        }
        let parts = iterated_parts_operator(&rho.truncate(n)?, &f0, n)?;
        fn_sup = fn_sup.max(parts.direct.abs());
    }
    let delta_m = constants.delta.powi(-(m as i32));
    let c0 = constants.k;
    let mut rows = Vec::new();
    for k in 0..=n {
        let ck = if k == 0 { c0 } else { constants.c(k) };
        let rho_bound = if k == 0 {
            constants.d / beta_next
        } else {
            constants.d / beta_next * ck * (constants.eta_hat * beta_m).powi(k as i32)
        };
        rows.push(BoundRow::new("rho", k, rho_sup[k], rho_bound));
        let f0_bound = if k == 0 {
            delta_m
        } else {
            ck * (zeta * constants.eta * beta_m).powi(k as i32) * delta_m
        };
        rows.push(BoundRow::new("f0", k, f0_sup[k], f0_bound));
    }
    let fn_bound =
        constants.c(n) * big_d.powi(n as i32) * delta_m * (beta_m / beta_next).powi(n as i32);
    rows.push(BoundRow::new("f_n", n, fn_sup, fn_bound));
    Ok(rows)
}

/// The variants for `m < j*(t)` with `ρ = 1/(t h'_{m+1})`,
/// `t h_{m+1} = 2t cos φ + ν θ_{m+1}`: the bound
/// `ρ^[k] ≤ (d_ν/t) C_k η̂^k β_m^k`, `d_ν = 2dν/c`, the sharper
/// `ρ^[k] ≤ (2^k/t)(1/k!) Σ_l 2^l l^k / c^{l+1}`, and the combined
/// `|f_n| ≤ C_n D^n δ^{−m} (β_m/t)^n`, where `c = min 2 sin φ`.
///
/// The sharper bound needs `|h'_{m+1}| ≥ c` and `|h_{m+1}^{(i+1)}| ≤ 2` for
/// `i ≤ k`; its rows are emitted only for the orders where the measured `h`
/// satisfies both.
pub fn early_barrier_bound_check(
    phi_grid: &[f64],
    model: &SparseModel,
    m: usize,
    n: usize,
    t: f64,
    nu: f64,
    constants: &GevreyConstants,
) -> Result<Vec<BoundRow>> {
    let big_d = constants
        .big_d
        .ok_or_else(|| Error::Degenerate("D is not available".into()))?;
    if m == 0 {
        return Err(Error::Domain("m must be at least 1".into()));
    }
    let gaps = gap_values(model, m + 1)?;
    let beta_m = gaps[m - 1];
    let c_min = phi_grid
        .iter()
        .map(|phi| 2.0 * phi.sin())
        .fold(f64::INFINITY, f64::min);
    let mut rho_sup = vec![0.0f64; n + 1];
    let mut fn_sup = 0.0f64;
    let mut h_sup = vec![0.0f64; n + 2];
    let mut h_prime_min = f64::INFINITY;
    for &phi in phi_grid {
        let jets = prufer_jet(phi, model, m + 1, n + 1)?;
        let variable = TaylorJet::variable(phi, n + 1);
        let (_, cos) = variable.sin_cos();
        let phase = &cos.scale(2.0 * t) + &jets.theta[m + 1].scale(nu);
        for (i, sup) in h_sup.iter_mut().enumerate().skip(2) {
            *sup = sup.max((phase.derivative_value(i) / t).abs());
        }
        h_prime_min = h_prime_min.min((phase.derivative_value(1) / t).abs());
        let rho = phase.derivative()?.recip()?;
        for k in 0..=n {
            rho_sup[k] = rho_sup[k].max(rho.coeffs[k].abs());
        }
        let f0 = prufer_jet(phi, model, m, n)?.inverse_radius();
        let parts = iterated_parts_operator(&rho.truncate(n)?, &f0, n)?;
        fn_sup = fn_sup.max(parts.direct.abs());
    }
    let d_nu = 2.0 * constants.d * nu / c_min;
    let mut rows = Vec::new();
    for k in 1..=n {
        let loose = d_nu / t.abs() * constants.c(k) * (constants.eta_hat * beta_m).powi(k as i32);
        rows.push(BoundRow::new("rho_loose", k, rho_sup[k], loose));
        if h_prime_min < c_min || h_sup[2..=k + 1].iter().any(|&h| h > 2.0) {
            continue;
        }
        let sharp: f64 = (1..=k)
            .map(|l| 2f64.powi(l as i32) * (l as f64).powi(k as i32) / c_min.powi(l as i32 + 1))
            .sum::<f64>()
            * 2f64.powi(k as i32)
            / (t.abs() * factorial(k));
        rows.push(BoundRow::new("rho_sharp", k, rho_sup[k], sharp));
    }
    let delta_m = constants.delta.powi(-(m as i32));
    let fn_bound =
        constants.c(n) * big_d.powi(n as i32) * delta_m * (beta_m / t.abs()).powi(n as i32);
    rows.push(BoundRow::new("f_n", n, fn_sup, fn_bound));
    Ok(rows)
}

/// Largest `|(e^{iν g∘θ_j})^[N]|` over the grid against
/// `c₃ C_N (δξη)^N β_j^N`, `c₂ = e^{νc₁} − 1`, `c₃ = c₂ξ/(ξ − 1)`.
pub fn phase_exponential_check(
    phi_grid: &[f64],
    model: &SparseModel,
    j: usize,
    nu: usize,
    order: usize,
    constants: &GevreyConstants,
) -> Result<Vec<BoundRow>> {
    if j == 0 {
        return Err(Error::Domain("j must be at least 1".into()));
    }
    let gaps = gap_values(model, j)?;
    let beta_j = gaps[j - 1];
    let p = model.p();
    let mut sup = vec![0.0f64; order + 1];
    for &phi in phi_grid {
        let jets = prufer_jet(phi, model, j, order)?;
        let theta = &jets.theta[j];
        let g = barrier_map_theta_jet(theta.value(), phi, p, order)?;
        let composed = scott_compose(&g, theta)?.scale(nu as f64);
        let (s, c) = composed.sin_cos();
        for n in 1..=order {
            sup[n] = sup[n].max(s.coeffs[n].hypot(c.coeffs[n]));
        }
    }
    let GevreyConstants {
        c1, xi, delta, eta, ..
    } = *constants;
    let c2 = (nu as f64 * c1).exp() - 1.0;
    let c3 = c2 * xi / (xi - 1.0);
    Ok((1..=order)
        .map(|n| {
            let bound = c3 * constants.c(n) * (delta * xi * eta * beta_j).powi(n as i32);
            BoundRow::new("exp_phase", n, sup[n], bound)
        })
        .collect())
}

/// One row of the sparseness-condition arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsenessRow {
    pub j: usize,
    /// `ln[β_{j+1} (β_j/β_{j+1})^N N!]`, `N = j + 1`, exact for the
    /// continuous increments `β_j = δ^{−j} e^{c j ln² j}`.
    pub log_expression: f64,
    /// Stirling form `−½ln(2πN) + N ln(N/e) − 2cN ln N` of the same quantity.
    pub log_stirling: f64,
    /// The Stirling form with an additional factor `δ^j`.
    pub log_stirling_with_delta: f64,
    /// `ln` of `D^N δ^{−j} (β_j/β_{j+1})^N N! · β_{j+1}`; the condition holds
    /// when this is `≤ 0`.
    pub log_condition: f64,
    pub holds: bool,
}

/// Evaluates `D^N δ^{−j} (β_j/β_{j+1})^N N! ≤ 1/β_{j+1}` with `N = j + 1`
/// in the log domain for `j = 1..=j_max`.
pub fn sparseness_condition(
    c: f64,
    delta: f64,
    big_d: f64,
    j_max: usize,
) -> Result<Vec<SparsenessRow>> {
    if !(c > 0.0 && delta > 0.0 && delta < 1.0 && big_d > 0.0) {
        return Err(Error::Domain(format!(
            "invalid parameters c = {c}, δ = {delta}, D = {big_d}"
        )));
    }
    let mut log_factorial = 0.0;
    let mut rows = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let jf = j as f64;
        let nf = jf + 1.0;
        log_factorial += nf.ln();
        // ln²j − ln²(j+1) = −ln(1 + 1/j)·(ln j + ln(j+1))
        let square_gap = -(1.0 / jf).ln_1p() * (jf.ln() + nf.ln());
        // δ cancels between β_{j+1} and the ratio
        let log_expression = c * nf * jf * square_gap + log_factorial;
        let log_stirling =
            -0.5 * (2.0 * PI * nf).ln() + nf * (nf.ln() - 1.0) - 2.0 * c * nf * nf.ln();
        let log_condition = nf * big_d.ln() - jf * delta.ln() + log_expression;
        rows.push(SparsenessRow {
            j,
            log_expression,
            log_stirling,
            log_stirling_with_delta: log_stirling + jf * delta.ln(),
            log_condition,
            holds: log_condition <= 0.0,
        });
    }
    Ok(rows)
}
