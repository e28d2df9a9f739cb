//! Transfer matrices, eigensolutions and Prüfer variables.
//!
//! The solution state at site `n` is `s_n = (y_n, p_{n−1}·y_{n−1})`, so one
//! recursion step is `s_{n+1} = M_n s_n` with the unimodular
//! `M_n = [[λ/p_n, −1/p_n], [p_n, 0]] = S_n·F`, where `F = [[λ, −1], [1, 0]]`
//! and `S_n = diag(1/p_n, p_n)`. A barrier therefore enters a single factor,
//! and runs of free steps are applied as closed-form powers of `F`.
//!
//! Prüfer coordinates are `U s = R·(sin θ, cos θ)` with
//! `U = [[0, sin φ], [1, −cos φ]]` and `λ = 2cos φ`; a free step adds `φ` to
//! `θ` and leaves `R` unchanged.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::phase::{reduce_multiple, reduce_small_multiple, ReducedAngle};
use crate::sparse_model::{SparseModel, SMALL_POSITION_LIMIT};

/// Converts `λ ∈ (−2, 2)` to `φ ∈ (0, π)`.
pub fn phi_of_lambda(lambda: f64) -> Result<f64> {
    if !(lambda.abs() < 2.0) {
        return Err(Error::Domain(format!(
            "λ = {lambda} is outside the elliptic range (−2, 2)"
        )));
    }
    Ok((lambda / 2.0).acos())
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi < PI {
        Ok(())
    } else {
        Err(Error::Domain(format!("φ = {phi} must lie in (0, π)")))
    }
}

/// A 2×2 real transfer matrix with its step count.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub entries: [[f64; 2]; 2],
    pub n_steps: BigUint,
}

impl TransferMatrix {
    pub fn identity() -> Self {
        Self {
            entries: [[1.0, 0.0], [0.0, 1.0]],
            n_steps: BigUint::zero(),
        }
    }

    pub fn det(&self) -> f64 {
        let m = &self.entries;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.entries;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            entries: mat_mul(&self.entries, &other.entries),
            n_steps: &self.n_steps + &other.n_steps,
        }
    }

    /// Spectral norm `‖T‖`.
    pub fn norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        let frob2 = a * a + b * b + c * c + d * d;
        let det = self.det();
        // singular values s1 ≥ s2 with s1² + s2² = frob², s1·s2 = |det|
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
        ((frob2 + disc) / 2.0).sqrt()
    }

    /// Angle `ϕ` of the unit vector `(cos ϕ, sin ϕ)` that `T` contracts the
    /// most, i.e. the eigenvector of `TᵀT` for its smallest eigenvalue
    /// `‖T‖^{−2}` (unimodular case).
    pub fn contracting_direction(&self) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        let p = a * a + c * c;
        let q = a * b + c * d;
        let r = b * b + d * d;
        // minimizer of (cos, sin)·[[p, q], [q, r]]·(cos, sin)
        0.5 * (2.0 * q).atan2(p - r) + FRAC_PI_2
    }
}

fn mat_mul(x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            x[0][0] * y[0][0] + x[0][1] * y[1][0],
            x[0][0] * y[0][1] + x[0][1] * y[1][1],
        ],
        [
            x[1][0] * y[0][0] + x[1][1] * y[1][0],
            x[1][0] * y[0][1] + x[1][1] * y[1][1],
        ],
    ]
}

/// `F^k` in closed form, `F^k = [[U_k, −U_{k−1}], [U_{k−1}, −U_{k−2}]]` with
/// `U_k = sin((k+1)φ)/sin φ`.
pub fn free_power(k: &BigUint, phi: f64) -> Result<TransferMatrix> {
    check_phi(phi)?;
    let angle = reduce_multiple(&(k + BigUint::one()), phi)?.angle;
    let s = phi.sin();
    let u = |shift: f64| (angle - shift * phi).sin() / s;
    Ok(TransferMatrix {
        entries: [[u(0.0), -u(1.0)], [u(1.0), -u(2.0)]],
        n_steps: k.clone(),
    })
}

/// Barrier scaling `S = diag(1/p, p)`.
fn scaling(p: f64) -> [[f64; 2]; 2] {
    [[1.0 / p, 0.0], [0.0, p]]
}

/// `T(N) = M_N ⋯ M_0`, mapping `s_0 = (1, 0)` to `s_{N+1} = (y_{N+1}, p_N y_N)`.
///
/// Cost is linear in the number of barriers below `N`.
pub fn transfer_matrix(n: &BigUint, lambda: f64, model: &SparseModel) -> Result<TransferMatrix> {
    let phi = phi_of_lambda(lambda)?;
    transfer_matrix_phi(n, phi, model)
}

/// [`transfer_matrix`] parameterized by `φ`.
pub fn transfer_matrix_phi(n: &BigUint, phi: f64, model: &SparseModel) -> Result<TransferMatrix> {
    check_phi(phi)?;
    if let (Some(small), Some(n_small)) = (
        model.barriers.small_positions(),
        n.to_u64().filter(|&v| v < SMALL_POSITION_LIMIT),
    ) {
        return Ok(transfer_matrix_small(n_small, phi, small, model));
    }
    transfer_matrix_big(n, phi, model)
}

fn transfer_matrix_big(n: &BigUint, phi: f64, model: &SparseModel) -> Result<TransferMatrix> {
    let p = model.p();
    let mut total = TransferMatrix::identity();
    // `done` = number of sites already processed (sites 0..done−1)
    let mut done = BigUint::zero();
    let end = n + BigUint::one();
    if !model.coupling.is_free() {
        for a in model.barriers.positions() {
            if a > n {
                break;
            }
            // free sites done..a−1, then F at site a, then S
            let free = free_power(&(a + BigUint::one() - &done), phi)?;
            total = free.compose(&total);
            total.entries = mat_mul(&scaling(p), &total.entries);
            done = a + BigUint::one();
        }
    }
    if end > done {
        total = free_power(&(&end - &done), phi)?.compose(&total);
    }
    Ok(total)
}

fn free_power_small(k: u64, phi: f64) -> [[f64; 2]; 2] {
    let angle = reduce_small_multiple(k + 1, phi).angle;
    let s = phi.sin();
    let u = |shift: f64| (angle - shift * phi).sin() / s;
    [[u(0.0), -u(1.0)], [u(1.0), -u(2.0)]]
}

fn transfer_matrix_small(
    n: u64,
    phi: f64,
    positions: &[u64],
    model: &SparseModel,
) -> TransferMatrix {
    let p = model.p();
    let mut total = [[1.0, 0.0], [0.0, 1.0]];
    let mut done = 0u64;
    if !model.coupling.is_free() {
        for &a in positions.iter().take_while(|&&a| a <= n) {
            total = mat_mul(&free_power_small(a + 1 - done, phi), &total);
            total[0][0] /= p;
            total[0][1] /= p;
            total[1][0] *= p;
            total[1][1] *= p;
            done = a + 1;
        }
    }
    if n + 1 > done {
        total = mat_mul(&free_power_small(n + 1 - done, phi), &total);
    }
    TransferMatrix {
        entries: total,
        n_steps: BigUint::from(n + 1),
    }
}

/// `(y_N, y_{N+1})` for the solution with `y_{−1} = 0`, `y_0 = 1`.
pub fn eigen_solution(n: &BigUint, lambda: f64, model: &SparseModel) -> Result<(f64, f64)> {
    let t = transfer_matrix(n, lambda, model)?;
    let [y_next, scaled] = t.apply([1.0, 0.0]);
    let p_n = if model.barriers.contains(n) && !model.coupling.is_free() {
        model.p()
    } else {
        1.0
    };
    Ok((scaled / p_n, y_next))
}

/// `|y_N − w y_{N+1}|²` with `w = e^{iφ}`.
pub fn boundary_modulus_squared(n: &BigUint, phi: f64, model: &SparseModel) -> Result<f64> {
    let (y_n, y_next) = eigen_solution(n, 2.0 * phi.cos(), model)?;
    let w = Complex64::from_polar(1.0, phi);
    Ok((Complex64::from(y_n) - w * y_next).norm_sqr())
}

/// `U = [[0, sin φ], [1, −cos φ]]`.
pub fn prufer_u(phi: f64) -> [[f64; 2]; 2] {
    [[0.0, phi.sin()], [1.0, -phi.cos()]]
}

/// Prüfer coordinates `(R, θ ∈ (−π, π])` of a state.
pub fn prufer_coordinates(state: [f64; 2], phi: f64) -> (f64, f64) {
    let u = prufer_u(phi);
    let x = u[0][0] * state[0] + u[0][1] * state[1];
    let y = u[1][0] * state[0] + u[1][1] * state[1];
    (x.hypot(y), x.atan2(y))
}

/// The barrier map on Prüfer angles,
/// `cot θ' = (cot θ + cot φ)/p² − cot φ`, lifted so that `θ' − θ ∈ (−π, π)`.
/// It maps each interval `[kπ, (k+1)π]` onto itself.
pub fn barrier_angle_map(theta: f64, phi: f64, p: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let kappa = (1.0 / p - p) / phi.tan();
    let x = p * s;
    let y = c / p + kappa * s;
    let raw = x.atan2(y);
    let mut lifted = raw + TAU * ((theta - raw) / TAU).round();
    if lifted - theta > PI {
        lifted -= TAU;
    } else if lifted - theta < -PI {
        lifted += TAU;
    }
    lifted
}

/// The tan-form one-step map
/// `θ' = arctan((tan θ + cot φ)/p² − cot φ)`, lifted to the branch in the
/// same interval `(kπ − π/2, kπ + π/2]` as `θ`. At the poles the removable
/// limit `θ' = θ` is returned. It is conjugate to [`barrier_angle_map`] by
/// `θ ↦ π/2 − θ`.
pub fn prufer_step_g(theta: f64, phi: f64, p: f64) -> Result<f64> {
    check_phi(phi)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "coupling p = {p} must lie in (0, 1]"
        )));
    }
    let cell = (theta / PI).round();
    let local = theta - cell * PI;
    if (local.abs() - FRAC_PI_2).abs() < 1e-15 {
        return Ok(theta);
    }
    let cot_phi = 1.0 / phi.tan();
    let value = (local.tan() + cot_phi) / (p * p) - cot_phi;
    Ok(value.atan() + cell * PI)
}

/// Ratio `R²_after / R²_before` produced by one barrier at Prüfer angle `θ`,
/// computed from the matrix `U S U⁻¹` applied to the unit vector.
pub fn direct_barrier_ratio(phi: f64, theta: f64, p: f64) -> f64 {
    let (x, y) = theta.sin_cos();
    let s = phi.sin();
    // U⁻¹ (x, y): x2 = x / sin φ, x1 = y + cos φ · x2
    let x2 = x / s;
    let x1 = y + phi.cos() * x2;
    let scaled = [x1 / p, x2 * p];
    let u = prufer_u(phi);
    let nx = u[0][1] * scaled[1];
    let ny = scaled[0] + u[1][1] * scaled[1];
    nx * nx + ny * ny
}

/// Coefficients of `R_k²/R_{k+1}² = p²/(a + b cos 2θ + c sin 2θ)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatioCoefficients {
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Phase `δ` with `A(φ) = |A|·e^{i(δ+π)}` the coefficient of `e^{2iθ}`
    /// in `H`; it satisfies `tan δ = −c/b`.
    pub delta_phase: f64,
    /// Largest residual of the fit on the validation samples, relative to `a`.
    pub residual: f64,
}

impl RatioCoefficients {
    /// `H(θ) = p²/(a + b cos 2θ + c sin 2θ) − 1`.
    pub fn h(&self, theta: f64) -> f64 {
        let (s2, c2) = (2.0 * theta).sin_cos();
        self.p * self.p / (self.a + self.b * c2 + self.c * s2) - 1.0
    }

    /// `ln(R_{k+1}²/R_k²)` at Prüfer angle `θ`.
    pub fn log_growth(&self, theta: f64) -> f64 {
        let (s2, c2) = (2.0 * theta).sin_cos();
        ((self.a + self.b * c2 + self.c * s2) / (self.p * self.p)).ln()
    }

    /// `|A(φ)|`, the geometric ratio of the Fourier coefficients of `H`.
    pub fn modulus(&self) -> f64 {
        let rho = self.b.hypot(self.c);
        if rho == 0.0 {
            return 0.0;
        }
        let root = (self.a * self.a - rho * rho).max(0.0).sqrt();
        (self.a - root) / rho
    }

    /// `A(φ) = |A|·e^{i(δ+π)}`.
    pub fn a_coefficient(&self) -> Complex64 {
        Complex64::from_polar(self.modulus(), self.delta_phase + PI)
    }
}

/// Number of validation samples in [`fit_ratio_coefficients`].
pub const FIT_VALIDATION_SAMPLES: usize = 256;

/// Fits `(a, b, c)` from four one-barrier transfer steps at
/// `θ ∈ {0, π/4, π/2, 3π/4}` and validates the model at fresh angles.
pub fn fit_ratio_coefficients(phi: f64, p: f64) -> Result<RatioCoefficients> {
    check_phi(phi)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "coupling p = {p} must lie in (0, 1]"
        )));
    }
    if p == 1.0 {
        return Ok(RatioCoefficients {
            p,
            a: 1.0,
            b: 0.0,
            c: 0.0,
            delta_phase: 0.0,
            residual: 0.0,
        });
    }
    let p2 = p * p;
    let sample = |theta: f64| p2 * direct_barrier_ratio(phi, theta, p);
    let v: Vec<f64> = (0..4).map(|i| sample(i as f64 * PI / 4.0)).collect();
    let a = v.iter().sum::<f64>() / 4.0;
    let b = (v[0] - v[2]) / 2.0;
    let c = (v[1] - v[3]) / 2.0;
    let mut coeffs = RatioCoefficients {
        p,
        a,
        b,
        c,
        delta_phase: if b == 0.0 && c == 0.0 {
            0.0
        } else {
            -c.atan2(b)
        },
        residual: 0.0,
    };
    let residual = (0..FIT_VALIDATION_SAMPLES)
        .map(|i| {
            // irrational offset keeps the validation angles off the fit nodes
            let theta = PI * ((i as f64 + 0.5) * 0.618_033_988_749_894_9).fract();
            let (s2, c2) = (2.0 * theta).sin_cos();
            let model = a + b * c2 + c * s2;
            // a is the mean of the ratio and sets the rounding scale
            ((model - sample(theta)) / a).abs()
        })
        .fold(0.0, f64::max);
    coeffs.residual = residual;
    if residual > 1e-10 {
        return Err(Error::ModelMismatch(format!(
            "ratio model residual {residual:.3e} at φ = {phi}, p = {p}"
        )));
    }
    if a <= b.hypot(c) {
        return Err(Error::ModelMismatch(format!(
            "fitted ratio is not positive: a = {a}, √(b²+c²) = {}",
            b.hypot(c)
        )));
    }
    Ok(coeffs)
}

/// `H(φ, θ) = R_k²/R_{k+1}² − 1` using fitted coefficients.
pub fn ratio_h(phi: f64, theta: f64, p: f64) -> Result<f64> {
    Ok(fit_ratio_coefficients(phi, p)?.h(theta))
}

/// Smallest grid used for the discrete Fourier analysis of `H`.
pub const FOURIER_GRID: usize = 2048;

/// Grid size with aliasing error `|A|^size` below `e^{−40}`.
fn fourier_grid(coeffs: &RatioCoefficients) -> usize {
    let needed = 40.0 / -coeffs.modulus().ln();
    if needed.is_finite() {
        (needed.ceil() as usize).max(FOURIER_GRID)
    } else {
        FOURIER_GRID
    }
}

/// Fourier coefficients of `θ ↦ H(φ, θ)` on the `e^{2inθ}` basis,
/// `n = 1..=n_max`, by discrete Fourier analysis on a uniform grid of `[0, π)`.
pub fn fourier_coeffs_h(phi: f64, p: f64, n_max: usize) -> Result<Vec<Complex64>> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let coeffs = fit_ratio_coefficients(phi, p)?;
    let grid = fourier_grid(&coeffs);
    let values: Vec<f64> = (0..grid)
        .map(|k| coeffs.h(PI * k as f64 / grid as f64))
        .collect();
    Ok((1..=n_max)
        .map(|n| {
            let sum: Complex64 = values
                .iter()
                .enumerate()
                .map(|(k, &h)| {
                    let angle = -2.0 * PI * (n * k % grid) as f64 / grid as f64;
                    Complex64::from_polar(h, angle)
                })
                .sum();
            sum / grid as f64
        })
        .collect())
}

/// Prüfer variables along the barrier subsequence for a fixed `φ`.
///
/// `theta[0] = φ` is the angle after site 0; `theta[m]` (m ≥ 1) is the angle
/// on arrival at barrier `m`, before its scaling. `log_r2[m]` is `ln R_m²`
/// after barrier `m`, with `log_r2[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PruferTrajectory {
    pub phi: f64,
    pub theta: Vec<ReducedAngle>,
    pub log_r2: Vec<f64>,
}

impl PruferTrajectory {
    /// Barrier indices covered, `0..=j_max`.
    pub fn barrier_index_range(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.theta.len() - 1
    }

    /// Angles as plain reals (exact while the turn count stays below 2^52).
    pub fn theta_unwrapped(&self) -> Vec<f64> {
        self.theta.iter().map(ReducedAngle::to_f64).collect()
    }
}

/// Evolves `(θ_m, ln R_m²)` for `m = 0..=j_max` using
/// `θ_m = g(θ_{m−1}) + β_m φ`, with `β_m φ` reduced modulo 2π exactly.
pub fn prufer_trajectory(phi: f64, model: &SparseModel, j_max: usize) -> Result<PruferTrajectory> {
    check_phi(phi)?;
    let gaps = model.barriers.gaps();
    if j_max > gaps.len() {
        return Err(Error::Domain(format!(
            "trajectory to barrier {j_max} requested, model has {}",
            gaps.len()
        )));
    }
    let p = model.p();
    let coeffs = if model.coupling.is_free() {
        None
    } else {
        Some(fit_ratio_coefficients(phi, p)?)
    };
    let mut theta = Vec::with_capacity(j_max + 1);
    let mut log_r2 = Vec::with_capacity(j_max + 1);
    theta.push(ReducedAngle::from_f64(phi));
    log_r2.push(0.0);
    for (m, gap) in gaps.iter().take(j_max).enumerate() {
        let previous = &theta[m];
        let after_barrier = if m == 0 || coeffs.is_none() {
            previous.clone()
        } else {
            let mapped = barrier_angle_map(previous.angle, phi, p);
            previous.add_f64(mapped - previous.angle)
        };
        let next = after_barrier.add(&reduce_multiple(gap, phi)?);
        let growth = coeffs.map_or(0.0, |c| c.log_growth(next.angle));
        log_r2.push(log_r2[m] + growth);
        theta.push(next);
    }
    Ok(PruferTrajectory { phi, theta, log_r2 })
}

/// `1/R_j²` rebuilt from `1/R_{j0}²` and the telescoping sum of
/// `(1/R_k²)·H(θ_{k+1})`, `k = j0..j−1`.
pub fn telescoped_inverse_radius(
    trajectory: &PruferTrajectory,
    coeffs: &RatioCoefficients,
    j0: usize,
    j: usize,
) -> f64 {
    let mut value = (-trajectory.log_r2[j0]).exp();
    for k in j0..j {
        value += (-trajectory.log_r2[k]).exp() * coeffs.h(trajectory.theta[k + 1].angle);
    }
    value
}

/// `ln |U T(N_j) v_0|²` for the truncation `N_j = a_j + 1`.
pub fn transfer_log_radius(phi: f64, model: &SparseModel, j: usize) -> Result<f64> {
    let n = model.truncation_after(j)?;
    let t = transfer_matrix_phi(&n, phi, model)?;
    let (r, _) = prufer_coordinates(t.apply([1.0, 0.0]), phi);
    Ok(2.0 * r.ln())
}

/// `|U T v_ϕ|²` for the unit vector at angle `ϕ`.
pub fn transfer_radius_along(t: &TransferMatrix, phi: f64, direction: f64) -> f64 {
    let (r, _) = prufer_coordinates(t.apply([direction.cos(), direction.sin()]), phi);
    r * r
}

/// Largest `|θ'_m/β_m − 1|` implied by the barrier map, where the derivative
/// is taken along the trajectory through the chain rule.
pub fn theta_derivative_ratio(phi: f64, model: &SparseModel, m: usize) -> Result<f64> {
    let gaps = model.barriers.gaps();
    if m == 0 || m > gaps.len() {
        return Err(Error::Domain(format!("barrier {m} out of range")));
    }
    let traj = prufer_trajectory(phi, model, m)?;
    let p = model.p();
    let mut derivative = 1.0;
    for k in 1..=m {
        let gap = gaps[k - 1].to_f64().unwrap_or(f64::INFINITY);
        let carried = if k == 1 || model.coupling.is_free() {
            derivative
        } else {
            let (dg_dtheta, dg_dphi) = barrier_map_partials(traj.theta[k - 1].angle, phi, p);
            dg_dtheta * derivative + dg_dphi
        };
        derivative = carried + gap;
    }
    let beta = gaps[m - 1].to_f64().unwrap_or(f64::INFINITY);
    Ok(derivative / beta - 1.0)
}

/// Partial derivatives `(∂θ'/∂θ, ∂θ'/∂φ)` of [`barrier_angle_map`].
pub fn barrier_map_partials(theta: f64, phi: f64, p: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let kappa = (1.0 / p - p) / phi.tan();
    let x = p * s;
    let y = c / p + kappa * s;
    let norm2 = x * x + y * y;
    // θ' = atan2(x, y): dθ' = (y dx − x dy)/(x² + y²)
    let dx_dtheta = p * c;
    let dy_dtheta = -s / p + kappa * c;
    let dkappa_dphi = -(1.0 / p - p) / (phi.sin() * phi.sin());
    let dy_dphi = dkappa_dphi * s;
    (
        (y * dx_dtheta - x * dy_dtheta) / norm2,
        -x * dy_dphi / norm2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_model::{BarrierSet, Coupling, SparsenessSpec};

    fn model(increments: Vec<u64>, p: f64) -> SparseModel {
        SparseModel::from_spec(&SparsenessSpec::explicit(increments), p).unwrap()
    }

    /// Site-by-site recursion `p_n y_{n+1} = λ y_n − p_{n−1} y_{n−1}`.
    fn sitewise(n: u64, lambda: f64, model: &SparseModel) -> (f64, f64) {
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut p_prev = 1.0;
        for site in 0..=n {
            let p_n = model.coupling_at_site(site);
            let next = (lambda * cur - p_prev * prev) / p_n;
            if site == n {
                return (cur, next);
            }
            prev = cur;
            cur = next;
            p_prev = p_n;
        }
        unreachable!()
    }

    #[test]
    fn free_solution_is_chebyshev() {
        let free = SparseModel::free();
        for &phi in &[0.3, 1.0, 2.2] {
            let lambda = 2.0 * f64::cos(phi);
            for n in [0u64, 1, 5, 77, 1000] {
                let (y, _) = eigen_solution(&BigUint::from(n), lambda, &free).unwrap();
                let closed = ((n + 1) as f64 * phi).sin() / phi.sin();
                assert!((y - closed).abs() < 1e-9, "n={n} phi={phi}");
                let (ys, _) = sitewise(n, lambda, &free);
                assert!((y - ys).abs() < 1e-9 * (1.0 + ys.abs()));
            }
        }
    }

    #[test]
    fn first_step_values() {
        let m = model(vec![3, 5], 0.4);
        let (y0, y1) = eigen_solution(&BigUint::zero(), 0.7, &m).unwrap();
        assert_eq!(y0, 1.0);
        assert!((y1 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_barrier_hand_recursion() {
        // barrier at n = 2, p = 1/2, λ = 0:
        // y1 = 0, y2 = −1, y3 = (0·y2 − 1·y1)/(1/2) = 0, y4 = (−(1/2)·y2)/1 = 1/2,
        // y5 = −y3 = 0
        let m = SparseModel::new(
            BarrierSet::from_positions(vec![BigUint::from(2u32)]).unwrap(),
            Coupling::new(0.5).unwrap(),
        );
        let (y4, y5) = eigen_solution(&BigUint::from(4u32), 0.0, &m).unwrap();
        assert!((y4 - 0.5).abs() < 1e-15 && y5.abs() < 1e-15);
        let (s4, s5) = sitewise(4, 0.0, &m);
        assert!((y4 - s4).abs() < 1e-15 && (y5 - s5).abs() < 1e-15);
    }

    #[test]
    fn sparse_solution_matches_sitewise() {
        let m = model(vec![4, 16, 64, 256], 0.6);
        for &lambda in &[-1.3, 0.2, 1.7] {
            for n in [3u64, 4, 5, 20, 100, 339, 340, 341, 500] {
                let (a, b) = eigen_solution(&BigUint::from(n), lambda, &m).unwrap();
                let (sa, sb) = sitewise(n, lambda, &m);
                let scale = 1.0 + sa.abs().max(sb.abs());
                assert!((a - sa).abs() < 1e-9 * scale, "n={n}");
                assert!((b - sb).abs() < 1e-9 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn small_and_big_paths_agree() {
        let m = model(vec![4, 16, 64, 256, 1024], 0.45);
        let small = m.barriers.small_positions().unwrap();
        for &phi in &[0.2, 1.4, 2.9] {
            for n in [0u64, 3, 4, 90, 340, 1364, 5000] {
                let a = transfer_matrix_small(n, phi, small, &m);
                let b = transfer_matrix_big(&BigUint::from(n), phi, &m).unwrap();
                for i in 0..2 {
                    for k in 0..2 {
                        let scale = 1.0 + b.entries[i][k].abs();
                        assert!((a.entries[i][k] - b.entries[i][k]).abs() < 1e-12 * scale);
                    }
                }
                assert_eq!(a.n_steps, b.n_steps);
            }
        }
    }

    #[test]
    fn free_transfer_trace() {
        let free = SparseModel::free();
        let phi = 0.913;
        for n in [1u64, 10, 12345] {
            let t = transfer_matrix_phi(&BigUint::from(n), phi, &free).unwrap();
            assert!((t.trace() - 2.0 * ((n + 1) as f64 * phi).cos()).abs() < 1e-9);
            assert!((t.det() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_errors() {
        let free = SparseModel::free();
        assert!(matches!(
            eigen_solution(&BigUint::one(), 2.0, &free),
            Err(Error::Domain(_))
        ));
        assert!(prufer_step_g(0.1, 0.0, 0.5).is_err());
    }

    #[test]
    fn tan_form_examples() {
        for &phi in &[0.4, 1.2, 2.5] {
            assert!((prufer_step_g(0.77, phi, 1.0).unwrap() - 0.77).abs() < 1e-14);
            for &p in &[0.3, 0.8] {
                let at_zero = prufer_step_g(0.0, phi, p).unwrap();
                let expected = ((1.0 / (p * p) - 1.0) / phi.tan()).atan();
                assert!((at_zero - expected).abs() < 1e-14);
                let left = prufer_step_g(FRAC_PI_2 - 1e-8, phi, p).unwrap();
                let right = prufer_step_g(FRAC_PI_2 + 1e-8, phi, p).unwrap();
                let pole = prufer_step_g(FRAC_PI_2, phi, p).unwrap();
                assert!((left - pole).abs() < 1e-6 && (right - pole).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tan_and_cot_forms_are_conjugate() {
        for i in 0..200 {
            let theta = -7.0 + 0.0731 * i as f64;
            let (phi, p) = (0.9, 0.45);
            let lhs = barrier_angle_map(theta, phi, p);
            let rhs = FRAC_PI_2 - prufer_step_g(FRAC_PI_2 - theta, phi, p).unwrap();
            let diff = (lhs - rhs) / PI;
            assert!((diff - diff.round()).abs() < 1e-12);
            assert!((lhs - theta).abs() < PI);
        }
    }

    #[test]
    fn barrier_map_matches_transfer_image() {
        let (phi, p) = (1.3, 0.35);
        for i in 0..50 {
            let theta = 0.13 * i as f64;
            let mapped = barrier_angle_map(theta, phi, p);
            let s = phi.sin();
            let (x, y) = theta.sin_cos();
            let x2 = x / s;
            let x1 = y + phi.cos() * x2;
            let (_, image) = prufer_coordinates([x1 / p, x2 * p], phi);
            let diff = (mapped - image) / TAU;
            assert!((diff - diff.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_recovers_closed_form() {
        for &(phi, p) in &[(0.5, 0.3), (1.5, 0.7), (2.8, 0.95)] {
            let c = fit_ratio_coefficients(phi, p).unwrap();
            let kappa: f64 = (1.0 - p * p) / p / phi.tan();
            let a0 = (p * p + kappa * kappa + 1.0 / (p * p)) / 2.0;
            let b0 = (1.0 / (p * p) - p * p - kappa * kappa) / 2.0;
            let c0 = kappa / p;
            let p2 = p * p;
            assert!((c.a - p2 * a0).abs() < 1e-12 * c.a);
            assert!((c.b - p2 * b0).abs() < 1e-12 * c.a);
            assert!((c.c - p2 * c0).abs() < 1e-12 * c.a);
        }
    }

    #[test]
    fn free_fit_is_trivial() {
        let c = fit_ratio_coefficients(1.1, 1.0).unwrap();
        assert_eq!((c.a, c.b, c.c), (1.0, 0.0, 0.0));
        assert_eq!(c.h(0.3), 0.0);
        assert!(fourier_coeffs_h(1.1, 1.0, 4)
            .unwrap()
            .iter()
            .all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn fourier_coefficients_are_powers() {
        for &(phi, p) in &[(0.7, 0.5), (2.0, 0.8)] {
            let coeffs = fourier_coeffs_h(phi, p, 8).unwrap();
            let fit = fit_ratio_coefficients(phi, p).unwrap();
            let a = fit.a_coefficient();
            for (n, z) in coeffs.iter().enumerate() {
                let expected = a.powu(n as u32 + 1);
                assert!((z - expected).norm() < 1e-8 * expected.norm().max(1e-300) + 1e-14);
                assert!(((z / coeffs[0].powu(n as u32 + 1)) - 1.0).norm() < 1e-6);
            }
            // tan δ against the phase of the measured first coefficient
            let measured_delta = coeffs[0].arg() - PI;
            assert!((measured_delta.tan() - fit.delta_phase.tan()).abs() < 1e-8);
            assert!((fit.delta_phase.tan() + fit.c / fit.b).abs() < 1e-8);
            // |A| = √(1 − 1/r)
            let r = crate::sparse_model::r_factor(p, 2.0 * phi.cos()).unwrap();
            assert!((fit.modulus() / (1.0 - 1.0 / r).sqrt() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn h_matches_direct_ratio_and_has_mean_zero() {
        let (phi, p) = (1.9, 0.4);
        let fit = fit_ratio_coefficients(phi, p).unwrap();
        let mean: f64 = (0..FOURIER_GRID)
            .map(|k| fit.h(PI * k as f64 / FOURIER_GRID as f64))
            .sum::<f64>()
            / FOURIER_GRID as f64;
        assert!(mean.abs() < 1e-10);
        for i in 0..100 {
            let theta = 0.0377 * i as f64;
            let direct = 1.0 / direct_barrier_ratio(phi, theta, p) - 1.0;
            assert!((fit.h(theta) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn parseval_identity() {
        let (phi, p) = (1.2, 0.6);
        let fit = fit_ratio_coefficients(phi, p).unwrap();
        let mean_square = (0..FOURIER_GRID)
            .map(|k| fit.h(PI * k as f64 / FOURIER_GRID as f64).powi(2))
            .sum::<f64>()
            / FOURIER_GRID as f64;
        let q2 = fit.modulus().powi(2);
        let series = 2.0 * q2 / (1.0 - q2);
        assert!((mean_square - series).abs() < 1e-8);
    }

    #[test]
    fn free_trajectory_is_linear() {
        let m = model(vec![4, 16, 64], 1.0);
        let phi = 0.83;
        let traj = prufer_trajectory(phi, &m, 3).unwrap();
        assert!(traj.log_r2.iter().all(|&v| v == 0.0));
        let total = traj.theta_unwrapped()[3];
        assert!((total - (1.0 + 84.0) * phi).abs() < 1e-12);
    }

    #[test]
    fn tr_identity_on_small_model() {
        let m = model(vec![4, 8, 16, 32, 64, 128], 0.4);
        for i in 1..40 {
            let phi = 0.07 * i as f64;
            let traj = prufer_trajectory(phi, &m, 6).unwrap();
            for j in 1..=6 {
                let via_transfer = transfer_log_radius(phi, &m, j).unwrap();
                assert!(
                    (via_transfer - traj.log_r2[j]).abs() < 1e-8,
                    "phi={phi} j={j}"
                );
            }
        }
    }

    #[test]
    fn telescoping_identity() {
        let m = model(vec![4, 8, 16, 32, 64], 0.55);
        let phi = 1.17;
        let traj = prufer_trajectory(phi, &m, 5).unwrap();
        let fit = fit_ratio_coefficients(phi, 0.55).unwrap();
        for j0 in 1..5 {
            let rebuilt = telescoped_inverse_radius(&traj, &fit, j0, 5);
            let direct = (-traj.log_r2[5]).exp();
            assert!((rebuilt - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn contracting_direction_realizes_norm() {
        let m = model(vec![4, 8, 16, 32], 0.5);
        let phi = 0.9;
        let t = transfer_matrix_phi(&m.truncation_after(4).unwrap(), phi, &m).unwrap();
        let dir = t.contracting_direction();
        let v = t.apply([dir.cos(), dir.sin()]);
        let shrink = v[0].hypot(v[1]);
        assert!((shrink * t.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn derivative_ratio_matches_finite_difference() {
        let m = model(vec![8, 64, 512], 0.6);
        let phi = 1.1;
        let h = 1e-6;
        for j in 1..=3 {
            let plus = prufer_trajectory(phi + h, &m, j).unwrap();
            let minus = prufer_trajectory(phi - h, &m, j).unwrap();
            let fd = plus.theta[j].difference(&minus.theta[j]) / (2.0 * h);
            let beta = m.barriers.gaps()[j - 1].to_f64().unwrap();
            let ratio = theta_derivative_ratio(phi, &m, j).unwrap();
            assert!(((1.0 + ratio) * beta - fd).abs() < 1e-5 * fd.abs(), "j={j}");
        }
    }
}
