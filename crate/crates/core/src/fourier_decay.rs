//! Fourier–Stieltjes transforms `γ(t) = ∫|f|² e^{itλ} dρ_N`, resonance
//! bookkeeping, the oscillatory kernel `Λ(t, τ)` and decay fits.

use std::f64::consts::PI;
use std::ops::Range;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gevrey_calculus::prufer_jet;
use crate::quadrature::{composite, FilonSampler, Rule};
use crate::sparse_model::SparseModel;
use crate::spectral_measure::{
    ac_density, free_density, integrate_against, model_frequency, QuadratureOptions, TestFunction,
    Weight,
};

/// `γ(t)` for the truncation `N = a_j + 1`, by [`integrate_against`].
pub fn gamma(
    t: f64,
    f: &TestFunction,
    j: usize,
    model: &SparseModel,
    options: &QuadratureOptions,
) -> Result<Complex64> {
    let n = model.truncation_after(j)?;
    Ok(integrate_against(f, &n, model, Weight::Oscillating { t }, options)?.value)
}

/// `|f|² dρ_N` sampled once for Filon evaluation of `γ(t)` at many `t`.
pub struct GammaEvaluator {
    sampler: FilonSampler<f64>,
    gamma0: f64,
    truncation: BigUint,
}

impl GammaEvaluator {
    /// Doubles the panel count until `γ(0)` and `γ(t_max)` are stable to
    /// `tolerance`.
    pub fn new(
        f: &TestFunction,
        j: usize,
        model: &SparseModel,
        t_max: f64,
        tolerance: f64,
    ) -> Result<Self> {
        let n = model.truncation_after(j)?;
        let (la, lb) = f.support();
        let (pa, pb) = f.phi_support();
        let stretch = 1.0 / (2.0 * pa.sin().min(pb.sin()));
        let frequency = model_frequency(&n, model) * stretch + 1.0;
        let mut panels = (((lb - la) * frequency / PI).ceil() as usize).max(8);
        let weight = |lambda: f64| {
            let fv = f.value(lambda);
            if fv == 0.0 {
                0.0
            } else {
                fv * fv * ac_density(&n, lambda, model).unwrap_or(f64::NAN)
            }
        };
        let build = |panels: usize| FilonSampler::new(la, lb, panels, 20, &weight);
        let mut current = build(panels);
        loop {
            let next = build(panels * 2);
            let gap = [0.0, t_max]
                .iter()
                .map(|&t| (next.fourier(t) - current.fourier(t)).norm())
                .fold(0.0, f64::max);
            if !gap.is_finite() {
                return Err(Error::Domain("density evaluation failed".into()));
            }
            if gap <= tolerance {
                let gamma0 = next.fourier(0.0).re;
                return Ok(Self {
                    sampler: next,
                    gamma0,
                    truncation: n,
                });
            }
            if panels > 1 << 22 {
                return Err(Error::Tolerance {
                    what: "γ sampler panel doubling".into(),
                    achieved: gap,
                    requested: tolerance,
                });
            }
            panels *= 2;
            current = next;
        }
    }

    pub fn fourier(&self, t: f64) -> Complex64 {
        self.sampler.fourier(t)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn truncation(&self) -> &BigUint {
        &self.truncation
    }
}

/// One root of `−sin φ + l θ'_{j*}(φ)/t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPhi {
    pub l: usize,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceInfo {
    pub t: f64,
    /// `β_{j*} ≤ t < β_{j*+1}`.
    pub j_star: usize,
    /// `(n* − 1) β_{j*} ≤ t < n* β_{j*}`.
    pub n_star: u64,
    /// `false` when the model has no barrier beyond `j*`, so the upper end
    /// of the bracket is not confirmed.
    pub bracket_closed: bool,
    /// Roots with the measured `θ'_{j*}`.
    pub critical_phis: Vec<CriticalPhi>,
    /// Roots with `θ'_{j*}` replaced by `β_{j*}`.
    pub proxy_critical_phis: Vec<CriticalPhi>,
    /// Continuous interpolation `L(t) = 1 + t/β_{j*}` of `n*`.
    pub interpolated_count: f64,
}

impl ResonanceInfo {
    /// Number of distinct `l` with at least one measured root.
    pub fn resonant_families(&self) -> usize {
        let mut ls: Vec<usize> = self.critical_phis.iter().map(|c| c.l).collect();
        ls.dedup();
        ls.len()
    }
}

/// Scan points per period of `θ'_{j*}` in the root search.
const SCAN_DENSITY: f64 = 24.0;

/// Brackets `t` in the increments and locates the critical `φ` in
/// `phi_window`, using `θ'_{j*}` from order-1 jets.
pub fn resonance_info(
    t: f64,
    model: &SparseModel,
    phi_window: (f64, f64),
) -> Result<ResonanceInfo> {
    let increments: Vec<f64> = model
        .barriers
        .increments()
        .iter()
        .map(|b| b.to_f64().unwrap_or(f64::INFINITY))
        .collect();
    let first = *increments
        .first()
        .ok_or_else(|| Error::Domain("model has no barriers".into()))?;
    if !(t >= first) {
        return Err(Error::Domain(format!(
            "t = {t} lies below β_1 = {first}: no resonance structure"
        )));
    }
    let (lo, hi) = phi_window;
    if !(0.0 < lo && lo < hi && hi < PI) {
        return Err(Error::Domain(format!("φ window [{lo}, {hi}] invalid")));
    }
    let j_star = increments.iter().take_while(|&&b| b <= t).count();
    let beta = increments[j_star - 1];
    let n_star = (t / beta).floor() as u64 + 1;
    let bracket_closed = j_star < increments.len();

    let derivative = |phi: f64| -> Result<f64> {
        Ok(prufer_jet(phi, model, j_star, 1)?.theta[j_star].coeffs[1])
    };
    let positions = model.barriers.gaps();
    let previous_position: f64 = positions[..j_star - 1]
        .iter()
        .map(|g| g.to_f64().unwrap_or(f64::INFINITY))
        .sum();
    let points = ((hi - lo) * (previous_position + 1.0) * SCAN_DENSITY / PI).ceil() as usize + 256;
    let grid: Vec<f64> = (0..=points)
        .map(|i| lo + (hi - lo) * i as f64 / points as f64)
        .collect();
    let slopes = grid
        .iter()
        .map(|&phi| derivative(phi))
        .collect::<Result<Vec<_>>>()?;
    let mut critical_phis = Vec::new();
    for l in 1..=(n_star + 2) {
        let lf = l as f64;
        let residual = |phi: f64, slope: f64| -phi.sin() + lf * slope / t;
        for i in 0..points {
            let (a, b) = (grid[i], grid[i + 1]);
            let (ra, rb) = (residual(a, slopes[i]), residual(b, slopes[i + 1]));
            if ra == 0.0 {
                critical_phis.push(CriticalPhi {
                    l: l as usize,
                    phi: a,
                });
                continue;
            }
            if ra * rb < 0.0 {
                let (mut x0, mut x1, mut r0) = (a, b, ra);
                for _ in 0..60 {
                    let mid = 0.5 * (x0 + x1);
                    let rm = residual(mid, derivative(mid)?);
                    if rm * r0 <= 0.0 {
                        x1 = mid;
                    } else {
                        x0 = mid;
                        r0 = rm;
                    }
                }
                critical_phis.push(CriticalPhi {
                    l: l as usize,
                    phi: 0.5 * (x0 + x1),
                });
            }
        }
    }
    let proxy_critical_phis = (1..=n_star + 2)
        .flat_map(|l| {
            let x = l as f64 * beta / t;
            let roots = if x < 1.0 {
                vec![x.asin(), PI - x.asin()]
            } else if x == 1.0 {
                vec![PI / 2.0]
            } else {
                vec![]
            };
            roots
                .into_iter()
                .filter(|&phi| lo <= phi && phi <= hi)
                .map(move |phi| CriticalPhi { l: l as usize, phi })
        })
        .collect();
    Ok(ResonanceInfo {
        t,
        j_star,
        n_star,
        bracket_closed,
        critical_phis,
        proxy_critical_phis,
        interpolated_count: 1.0 + t / beta,
    })
}

/// `Ω²(t) = E e^{c ln² ln t}` with `E` measured as the supremum of
/// `L(t)/e^{c ln² ln t}` over sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEnvelope {
    pub c: f64,
    pub e: f64,
}

impl OmegaEnvelope {
    pub fn measure(c: f64, samples: &[(f64, f64)]) -> Result<Self> {
        let e = samples
            .iter()
            .map(|&(t, l)| {
                if t > 1.0 {
                    Ok(l / (c * t.ln().ln().powi(2)).exp())
                } else {
                    Err(Error::Domain(format!("t = {t} must exceed 1")))
                }
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(Self { c, e })
    }

    pub fn log_omega_squared(&self, t: f64) -> f64 {
        self.e.ln() + self.c * t.ln().ln().powi(2)
    }

    pub fn omega(&self, t: f64) -> f64 {
        (0.5 * self.log_omega_squared(t)).exp()
    }
}

/// An interval `[a, b] ⊂ (−2, 0) ∪ (0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorputWindow {
    pub a: f64,
    pub b: f64,
}

impl CorputWindow {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let inside = -2.0 < a && a < b && b < 2.0;
        if !inside || (a <= 0.0 && b >= 0.0) {
            return Err(Error::Domain(format!(
                "window [{a}, {b}] must lie in (−2, 0) or (0, 2)"
            )));
        }
        Ok(Self { a, b })
    }

    fn sup_over(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..=512)
            .map(|i| f(self.a + (self.b - self.a) * i as f64 / 512.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn inf_over(&self, f: impl Fn(f64) -> f64) -> f64 {
        -self.sup_over(|x| -f(x))
    }

    /// `sup |λ|/(4 − λ²)^{3/2} / (2π²)`.
    pub fn curvature_sup(&self) -> f64 {
        self.sup_over(curvature) / (2.0 * PI * PI)
    }

    /// `inf |λ|/(4 − λ²)^{3/2} / (2π²)`, the true lower bound of
    /// `|f''|/|κ|`.
    pub fn curvature_inf(&self) -> f64 {
        self.inf_over(curvature) / (2.0 * PI * PI)
    }

    /// `Δ = 1 + |κ/t| sup 1/(π√(4 − λ²))`.
    pub fn delta_cutoff(&self, t: f64, kappa: f64) -> f64 {
        1.0 + (kappa / t).abs() * self.sup_over(|x| 1.0 / (PI * (4.0 - x * x).sqrt()))
    }
}

fn curvature(lambda: f64) -> f64 {
    lambda.abs() / (4.0 - lambda * lambda).powf(1.5)
}

/// `(κ/π) arccos(λ/2)`.
fn arc_phase(kappa: f64, lambda: f64) -> f64 {
    kappa / PI * (lambda / 2.0).acos()
}

/// `d/dλ [ωλ + (κ/π) arccos(λ/2)]`.
fn phase_slope(omega: f64, kappa: f64, lambda: f64) -> f64 {
    omega - kappa / (PI * (4.0 - lambda * lambda).sqrt())
}

/// `∫_a^b F(λ) e^{i(ωλ + (κ/π) arccos(λ/2))} dλ` by composite Gauss rules
/// of two orders on panels spanning at most one period; returns the value
/// and the difference between the orders.
fn oscillatory_integral(
    window: (f64, f64),
    omega: f64,
    kappa: f64,
    amplitude: &(impl Fn(f64) -> f64 + Sync),
) -> (Complex64, f64) {
    let (a, b) = window;
    let edge = a.abs().max(b.abs());
    let max_slope = omega.abs() + kappa.abs() / (PI * (4.0 - edge * edge).sqrt());
    let panels = ((b - a) * max_slope / PI).ceil() as usize + 8;
    let integrand = |x: f64| Complex64::from_polar(amplitude(x), omega * x + arc_phase(kappa, x));
    let fine = composite(&Rule::gauss_legendre(16), a, b, panels, &integrand);
    let coarse = composite(&Rule::gauss_legendre(10), a, b, panels, &integrand);
    (fine, (fine - coarse).norm())
}

/// Which of the two kernel estimates applies to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRegime {
    SmallTau,
    LargeTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSample {
    pub t: f64,
    pub tau: f64,
    pub kappa: f64,
    pub lambda: Complex64,
    pub quadrature_error: f64,
    /// `4/√(ρκ)` with `2π²ρ = sup λ/(4 − λ²)^{3/2}`.
    pub bound_small_tau: f64,
    /// The same bound with the infimum in place of the supremum.
    pub bound_small_tau_inf: f64,
    /// `|τ|/(π min |F'|)`, the first-derivative constant of this sample;
    /// infinite when `F'` vanishes on the window.
    pub large_tau_constant: f64,
    /// `large_tau_constant/|τ|`.
    pub bound_large_tau: f64,
    pub delta_cutoff: f64,
    pub regime: KernelRegime,
}

/// `Λ(t, τ) = (1/2π) ∫_a^b e^{i(tλ + (κ/π) arccos(λ/2) + τλ)} dλ` with both
/// regime bounds.
pub fn corput_kernel(t: f64, tau: f64, kappa: f64, window: CorputWindow) -> Result<KernelSample> {
    let (value, error) = oscillatory_integral((window.a, window.b), t + tau, kappa, &|_| 1.0);
    let rho_sup = window.curvature_sup();
    let rho_inf = window.curvature_inf();
    let small = |rho: f64| {
        if kappa == 0.0 {
            f64::INFINITY
        } else {
            4.0 / (rho * kappa.abs()).sqrt()
        }
    };
    let (fa, fb) = (
        phase_slope(t + tau, kappa, window.a),
        phase_slope(t + tau, kappa, window.b),
    );
    let min_slope = if fa * fb > 0.0 {
        fa.abs().min(fb.abs())
    } else {
        0.0
    };
    let large_tau_constant = tau.abs() / (PI * min_slope);
    let delta_cutoff = window.delta_cutoff(t, kappa);
    let regime = if tau.abs() > delta_cutoff * t.abs() {
        KernelRegime::LargeTau
    } else {
        KernelRegime::SmallTau
    };
    Ok(KernelSample {
        t,
        tau,
        kappa,
        lambda: value / (2.0 * PI),
        quadrature_error: error / (2.0 * PI),
        bound_small_tau: small(rho_sup),
        bound_small_tau_inf: small(rho_inf),
        large_tau_constant,
        bound_large_tau: large_tau_constant / tau.abs(),
        delta_cutoff,
        regime,
    })
}

/// Kernel samples over a `(t, τ)` grid with a single large-`τ` constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelGridReport {
    pub samples: Vec<KernelSample>,
    /// `K'`: the largest first-derivative constant over large-`τ` samples.
    pub k_prime: f64,
    /// `sup |τ Λ|` over large-`τ` samples.
    pub measured_k_prime: f64,
    pub small_tau_violations: usize,
    pub large_tau_violations: usize,
}

/// Evaluates `Λ` at `τ = s·t` for each `t` and multiplier `s`, with
/// `κ = kappa_ratio·t`, and counts violations of `|Λ| ≤ 4/√(ρκ)` (small
/// `τ`) and `|Λ| ≤ K'/|τ|` (large `τ`).
pub fn kernel_grid(
    t_grid: &[f64],
    tau_multipliers: &[f64],
    kappa_ratio: f64,
    window: CorputWindow,
) -> Result<KernelGridReport> {
    let mut samples = Vec::with_capacity(t_grid.len() * tau_multipliers.len());
    for &t in t_grid {
        for &s in tau_multipliers {
            samples.push(corput_kernel(t, s * t, kappa_ratio * t, window)?);
        }
    }
    let large = || {
        samples
            .iter()
            .filter(|s| s.regime == KernelRegime::LargeTau)
    };
    let k_prime = large().map(|s| s.large_tau_constant).fold(0.0, f64::max);
    let measured_k_prime = large()
        .map(|s| s.tau.abs() * s.lambda.norm())
        .fold(0.0, f64::max);
    let large_tau_violations = large()
        .filter(|s| s.lambda.norm() > k_prime / s.tau.abs())
        .count();
    let small_tau_violations = samples
        .iter()
        .filter(|s| s.regime == KernelRegime::SmallTau && s.lambda.norm() > s.bound_small_tau)
        .count();
    Ok(KernelGridReport {
        samples,
        k_prime,
        measured_k_prime,
        small_tau_violations,
        large_tau_violations,
    })
}

/// Synthetic measures `dG = g dλ` on `[a, b]` for the kernel lemma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticMeasure {
    /// Smooth bump times the free density.
    SmoothBump { a: f64, b: f64, flatness: f64 },
    /// `(λ − a)^{−ε}` times the free density, cut off at `b`.
    EndpointSingular { a: f64, b: f64, epsilon: f64 },
}

impl SyntheticMeasure {
    pub fn window(&self) -> Result<CorputWindow> {
        match *self {
            SyntheticMeasure::SmoothBump { a, b, .. } => CorputWindow::new(a, b),
            SyntheticMeasure::EndpointSingular { a, b, epsilon } => {
                if !(0.0 < epsilon && epsilon < 1.0) {
                    return Err(Error::Domain(format!("ε = {epsilon} must lie in (0, 1)")));
                }
                CorputWindow::new(a, b)
            }
        }
    }

    /// `g(λ)`.
    pub fn density(&self, lambda: f64) -> Result<f64> {
        let window = self.window()?;
        if lambda < window.a || lambda > window.b {
            return Ok(0.0);
        }
        Ok(match *self {
            SyntheticMeasure::SmoothBump { a, b, flatness } => {
                let bump = TestFunction::wide(a, b, flatness)?;
                bump.value(lambda) * free_density(lambda)
            }
            SyntheticMeasure::EndpointSingular { a, epsilon, .. } => {
                (lambda - a).powf(-epsilon) * free_density(lambda)
            }
        })
    }

    /// `∫ e^{i(tλ + (κ/π) arccos(λ/2))} dG(λ)` by direct quadrature, with an
    /// error estimate.
    pub fn gamma(&self, t: f64, kappa: f64) -> Result<(Complex64, f64)> {
        let window = self.window()?;
        match *self {
            SyntheticMeasure::SmoothBump { a, b, flatness } => {
                let bump = TestFunction::wide(a, b, flatness)?;
                let amplitude = |x: f64| bump.value(x) * free_density(x);
                Ok(oscillatory_integral((a, b), t, kappa, &amplitude))
            }
            SyntheticMeasure::EndpointSingular { a, b, epsilon } => {
                // λ = a + s^{1/(1−ε)} removes the endpoint singularity
                let power = 1.0 / (1.0 - epsilon);
                let s_max = (b - a).powf(1.0 - epsilon);
                let stretch = power * s_max.powf(power - 1.0);
                let max_slope =
                    (t.abs() + kappa.abs() / (PI * (4.0 - window.b.powi(2)).sqrt())) * stretch;
                let panels = (s_max * max_slope / PI).ceil() as usize + 16;
                let integrand = |s: f64| {
                    let lambda = a + s.powf(power);
                    let phase = t * lambda + arc_phase(kappa, lambda);
                    Complex64::from_polar(power * free_density(lambda), phase)
                };
                let fine = composite(&Rule::gauss_legendre(16), 0.0, s_max, panels, &integrand);
                let coarse = composite(&Rule::gauss_legendre(10), 0.0, s_max, panels, &integrand);
                Ok((fine, (fine - coarse).norm()))
            }
        }
    }
}

/// `τ ↦ ∫ e^{iτλ} dG(λ)` for a smooth synthetic measure.
pub struct MeasureTransform {
    sampler: FilonSampler<f64>,
}

impl MeasureTransform {
    pub fn new(measure: &SyntheticMeasure, tolerance: f64) -> Result<Self> {
        let window = measure.window()?;
        if let SyntheticMeasure::EndpointSingular { .. } = measure {
            return Err(Error::Domain(
                "the transform route needs a smooth synthetic measure".into(),
            ));
        }
        let density = |x: f64| measure.density(x).unwrap_or(f64::NAN);
        let mut panels = 8;
        let mut current = FilonSampler::new(window.a, window.b, panels, 20, &density);
        loop {
            let next = FilonSampler::new(window.a, window.b, panels * 2, 20, &density);
            let gap = [0.0, 50.0, 500.0]
                .iter()
                .map(|&w| (next.fourier(w) - current.fourier(w)).norm())
                .fold(0.0, f64::max);
            if gap <= tolerance {
                return Ok(Self { sampler: next });
            }
            if panels > 1 << 16 {
                return Err(Error::Tolerance {
                    what: "synthetic transform sampling".into(),
                    achieved: gap,
                    requested: tolerance,
                });
            }
            panels *= 2;
            current = next;
        }
    }

    pub fn at(&self, tau: f64) -> Complex64 {
        self.sampler.fourier(tau)
    }
}

/// The two routes to `γ(t)` and the pieces of the split estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlancherelCheck {
    pub t: f64,
    pub kappa: f64,
    pub direct: Complex64,
    pub direct_error: f64,
    /// `∫_{−T}^{T} Λ(t, τ) ĝ(−τ) dτ`.
    pub plancherel: Complex64,
    pub relative_difference: f64,
    /// Truncation `T_max` of the `τ` integral.
    pub t_max: f64,
    /// Estimated `∫_{|τ|>T} |Λ ĝ|`, from `(b − a)/2π · 2∫_T^∞ |ĝ|`.
    pub tail_estimate: f64,
    /// `∫_{|τ|≤Δt} |Λ||ĝ|`.
    pub small_piece: f64,
    /// `∫_{Δt<|τ|≤T} |Λ||ĝ|`.
    pub large_piece: f64,
    /// `(4/√(ρκ)) ∫_{|τ|≤Δt} C/(1 + |τ|)`.
    pub small_piece_bound: f64,
    /// `∫_{|τ|>Δt} K' C/(|τ|(1 + |τ|))`.
    pub large_piece_bound: f64,
    /// Measured `sup (1 + |τ|)|ĝ(τ)|`.
    pub transform_constant: f64,
    pub delta_cutoff: f64,
}

/// `τ`-panel width of the Plancherel integral; `Λ ĝ` oscillates at most at
/// frequency `2 max |λ|` in `τ`.
const TAU_PANEL: f64 = 1.5;

/// Evaluates `γ(t)` directly and as `∫ Λ(t, τ) ĝ(−τ) dτ`, truncating at
/// the first `T = 2^k · 16` whose tail estimate is below `tolerance`.
pub fn plancherel_check(
    measure: &SyntheticMeasure,
    transform: &MeasureTransform,
    t: f64,
    kappa: f64,
    tolerance: f64,
) -> Result<PlancherelCheck> {
    let window = measure.window()?;
    let (direct, direct_error) = measure.gamma(t, kappa)?;
    let width = window.b - window.a;
    let tail = |big_t: f64| {
        let sup = (0..=64)
            .map(|i| big_t * (1.0 + i as f64 / 64.0))
            .map(|tau| transform.at(tau).norm().max(transform.at(-tau).norm()))
            .fold(0.0, f64::max);
        width / (2.0 * PI) * 2.0 * big_t * sup
    };
    let mut t_max = 16.0;
    while tail(t_max) > tolerance {
        t_max *= 2.0;
        if t_max > 1e5 {
            return Err(Error::Tolerance {
                what: "Plancherel truncation".into(),
                achieved: tail(t_max),
                requested: tolerance,
            });
        }
    }
    let tail_estimate = tail(t_max);

    // Λ(t, τ) = (1/2π) ∫ e^{i(κ/π)arccos(λ/2)} e^{i(t+τ)λ} dλ
    let arc = |x: f64| Complex64::from_polar(1.0, arc_phase(kappa, x));
    let edge = window.a.abs().max(window.b.abs());
    let arc_frequency = kappa.abs() / (PI * (4.0 - edge * edge).sqrt());
    let mut panels = ((width * arc_frequency / PI).ceil() as usize).max(8);
    let kernel = loop {
        let coarse = FilonSampler::new(window.a, window.b, panels, 20, &arc);
        let fine = FilonSampler::new(window.a, window.b, panels * 2, 20, &arc);
        let gap = [t, t + t_max, t - t_max]
            .iter()
            .map(|&w| (fine.fourier(w) - coarse.fourier(w)).norm())
            .fold(0.0, f64::max);
        if gap <= 1e-14 || panels > 1 << 20 {
            break fine;
        }
        panels *= 2;
    };

    let delta_cutoff = window.delta_cutoff(t, kappa);
    let rule = Rule::gauss_legendre(20);
    let tau_panels = (2.0 * t_max / TAU_PANEL).ceil() as usize;
    let step = 2.0 * t_max / tau_panels as f64;
    let mut plancherel = Complex64::new(0.0, 0.0);
    let (mut small_piece, mut large_piece) = (0.0, 0.0);
    let mut transform_constant: f64 = 0.0;
    let mut k_prime: f64 = 0.0;
    let rho = window.curvature_sup();
    for p in 0..tau_panels {
        let lo = -t_max + step * p as f64;
        let half = 0.5 * step;
        let mid = lo + half;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let tau = mid + half * x;
            let lambda = kernel.fourier(t + tau) / (2.0 * PI);
            let g_hat = transform.at(-tau);
            plancherel += lambda * g_hat * (w * half);
            let magnitude = lambda.norm() * g_hat.norm() * w * half;
            transform_constant = transform_constant.max((1.0 + tau.abs()) * g_hat.norm());
            if tau.abs() <= delta_cutoff * t.abs() {
                small_piece += magnitude;
            } else {
                large_piece += magnitude;
                let (fa, fb) = (
                    phase_slope(t + tau, kappa, window.a),
                    phase_slope(t + tau, kappa, window.b),
                );
                if fa * fb > 0.0 {
                    k_prime = k_prime.max(tau.abs() / (PI * fa.abs().min(fb.abs())));
                }
            }
        }
    }
    let cutoff = delta_cutoff * t.abs();
    let small_piece_bound = if kappa == 0.0 {
        f64::INFINITY
    } else {
        4.0 / (rho * kappa.abs()).sqrt() * transform_constant * 2.0 * cutoff.ln_1p()
    };
    let large_piece_bound = k_prime * transform_constant * 2.0 * (1.0 / cutoff).ln_1p();
    let relative_difference = (plancherel - direct).norm() / direct.norm();
    Ok(PlancherelCheck {
        t,
        kappa,
        direct,
        direct_error,
        plancherel,
        relative_difference,
        t_max,
        tail_estimate,
        small_piece,
        large_piece,
        small_piece_bound,
        large_piece_bound,
        transform_constant,
        delta_cutoff,
    })
}

/// One row of the decay table of a synthetic measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaMainRow {
    pub t: f64,
    pub gamma_abs: f64,
    pub quadrature_error: f64,
    /// `|γ| √t / ln t`, or `|γ| t^{1/2 − ε}` for the singular variant.
    pub ratio: f64,
    /// `false` when `|γ|` is within ten times its quadrature error.
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaMainReport {
    pub measure: SyntheticMeasure,
    pub kappa_ratio: f64,
    pub rows: Vec<LemmaMainRow>,
    pub sup_ratio: f64,
    /// Least-squares slope of `ln ratio` against `ln t` over resolved rows.
    pub trend_slope: f64,
    pub resolved_rows: usize,
}

/// Tabulates `|γ(t)|` against `t^{−1/2} ln t` (or `t^{−1/2+ε}` for the
/// singular measure) with `κ = kappa_ratio·t`.
pub fn lemma_main_bound(
    measure: &SyntheticMeasure,
    kappa_ratio: f64,
    t_grid: &[f64],
) -> Result<LemmaMainReport> {
    if t_grid.iter().any(|&t| !(t >= 2.0)) {
        return Err(Error::Domain("t grid must lie in [2, ∞)".into()));
    }
    let rows = t_grid
        .iter()
        .map(|&t| {
            let (value, error) = measure.gamma(t, kappa_ratio * t)?;
            let gamma_abs = value.norm();
            let ratio = match measure {
                SyntheticMeasure::SmoothBump { .. } => gamma_abs * t.sqrt() / t.ln(),
                SyntheticMeasure::EndpointSingular { epsilon, .. } => {
                    gamma_abs * t.powf(0.5 - epsilon)
                }
            };
            Ok(LemmaMainRow {
                t,
                gamma_abs,
                quadrature_error: error,
                ratio,
                resolved: gamma_abs > 10.0 * error.max(f64::EPSILON),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let resolved: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.resolved)
        .map(|r| (r.t.ln(), r.ratio.ln()))
        .collect();
    let trend_slope = least_squares(&resolved).map_or(f64::NAN, |fit| fit.0);
    Ok(LemmaMainReport {
        measure: *measure,
        kappa_ratio,
        sup_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
        resolved_rows: resolved.len(),
        rows,
        trend_slope,
    })
}

/// `(slope, intercept, residual sum of squares, slope standard error)`.
fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let dof = (n - 2.0).max(1.0);
    Some((slope, intercept, rss, (rss / dof / sxx).sqrt()))
}

/// Result of [`decay_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Two standard errors of the exponent.
    pub half_width: f64,
}

/// Least-squares slope of `ln |γ|` against `ln t` over `window`; with an
/// envelope, `|γ|` is first divided by `Ω(t)`.
pub fn decay_fit(
    t_grid: &[f64],
    gamma_abs: &[f64],
    window: Range<usize>,
    envelope: Option<&OmegaEnvelope>,
) -> Result<DecayFit> {
    if t_grid.len() != gamma_abs.len() || window.end > t_grid.len() {
        return Err(Error::Domain("scan arrays and window disagree".into()));
    }
    let points: Vec<(f64, f64)> = window
        .filter(|&i| gamma_abs[i] > 0.0)
        .map(|i| {
            let t = t_grid[i];
            let value = envelope.map_or(gamma_abs[i], |e| gamma_abs[i] / e.omega(t));
            (t.ln(), value.ln())
        })
        .collect();
    if points.len() < 10 {
        return Err(Error::Degenerate(format!(
            "{} usable points, at least 10 needed",
            points.len()
        )));
    }
    let span = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
        - points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if span < 2.0 * std::f64::consts::LN_10 - 1e-12 {
        return Err(Error::Degenerate(
            "fit window spans less than two decades".into(),
        ));
    }
    let (exponent, intercept, residual, error) =
        least_squares(&points).ok_or_else(|| Error::Degenerate("degenerate fit".into()))?;
    Ok(DecayFit {
        exponent,
        intercept,
        residual,
        half_width: 2.0 * error,
    })
}

/// `|γ(t)|` over a log-spaced grid with its fit and resonance annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayScan {
    pub t_grid: Vec<f64>,
    pub gamma_abs: Vec<f64>,
    pub gamma0: f64,
    pub fitted_exponent: f64,
    pub half_width: f64,
    pub fit_window: Range<usize>,
    pub resonance_marks: Vec<Option<ResonanceInfo>>,
}

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Scans `|γ(t)|` for the truncation after barrier `j`, fits the exponent
/// over the whole grid and, when `annotate` is set, attaches resonance data
/// for every `t ≥ β_1`.
pub fn decay_scan(
    f: &TestFunction,
    j: usize,
    model: &SparseModel,
    t_grid: &[f64],
    annotate: bool,
) -> Result<DecayScan> {
    if t_grid.iter().any(|&t| !(t >= 2.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("t grid must be increasing and ≥ 2".into()));
    }
    let t_max = *t_grid
        .last()
        .ok_or_else(|| Error::Degenerate("empty t grid".into()))?;
    let evaluator = GammaEvaluator::new(f, j, model, t_max, 1e-12)?;
    let gamma_abs: Vec<f64> = t_grid
        .iter()
        .map(|&t| evaluator.fourier(t).norm())
        .collect();
    let window = 0..t_grid.len();
    let fit = decay_fit(t_grid, &gamma_abs, window.clone(), None)?;
    let first = model
        .barriers
        .increments()
        .first()
        .and_then(|b| b.to_f64())
        .unwrap_or(f64::INFINITY);
    let resonance_marks = t_grid
        .iter()
        .map(|&t| {
            if annotate && t >= first {
                resonance_info(t, model, f.phi_support()).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayScan {
        t_grid: t_grid.to_vec(),
        gamma_abs,
        gamma0: evaluator.gamma0(),
        fitted_exponent: fit.exponent,
        half_width: fit.half_width,
        fit_window: window,
        resonance_marks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaGrowth {
    pub c: f64,
    pub epsilon: f64,
    pub e: f64,
    /// `(t, ln Ω²(t), Ω(t)/t^ε)`.
    pub rows: Vec<(f64, f64, f64)>,
    /// `t` beyond which `Ω/t^ε` decreases; `None` when it decreases for all
    /// `t > e`.
    pub turning_point: Option<f64>,
    /// Whether the grid values after the turning point decrease strictly.
    pub decreasing_after: bool,
}

/// Tabulates `Ω(t)/t^ε` with `Ω² = E e^{c ln² ln t}`. With `u = ln t` the
/// log-ratio has derivative `c ln u/u − ε`, so the turning point is the
/// larger root of `c ln u = εu`.
pub fn omega_growth_check(c: f64, epsilon: f64, e: f64, t_grid: &[f64]) -> Result<OmegaGrowth> {
    if !(epsilon > 0.0 && c >= 0.0 && e > 0.0) {
        return Err(Error::Domain(format!(
            "need ε > 0, c ≥ 0, E > 0 (got {epsilon}, {c}, {e})"
        )));
    }
    let envelope = OmegaEnvelope { c, e };
    let rows: Vec<(f64, f64, f64)> = t_grid
        .iter()
        .map(|&t| {
            let log_omega2 = envelope.log_omega_squared(t);
            (t, log_omega2, (0.5 * log_omega2 - epsilon * t.ln()).exp())
        })
        .collect();
    let slope = |u: f64| c * u.ln() / u - epsilon;
    // c ln u / u peaks at u = e
    let peak = std::f64::consts::E;
    let turning_point = if c == 0.0 || slope(peak) <= 0.0 {
        None
    } else {
        let (mut lo, mut hi) = (peak, peak);
        while slope(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi.exp())
    };
    let start = turning_point.unwrap_or(0.0);
    let after: Vec<f64> = rows.iter().filter(|r| r.0 >= start).map(|r| r.2).collect();
    let decreasing_after = after.windows(2).all(|w| w[1] < w[0]);
    Ok(OmegaGrowth {
        c,
        epsilon,
        e,
        rows,
        turning_point,
        decreasing_after,
    })
}
