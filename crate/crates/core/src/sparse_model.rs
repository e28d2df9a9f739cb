//! Sparse coupling model: the lacunary set of barrier positions, the coupling
//! sequence, and the closed-form growth factor and local dimension.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{ln_biguint, rounded_growth_increment, Scalar};

/// Generator of the increments `β_j = a_j − a_{j−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SparsenessFamily {
    /// `β_j = base^j`.
    Exponential { base: f64 },
    /// `β_j = δ^{-j} exp(c·j·ln²j)`.
    LogSquared { c: f64, delta: f64 },
    /// `β_j = δ^{-j} exp(j·ln j / ε)`.
    Factorial { epsilon: f64, delta: f64 },
    /// Increments listed explicitly.
    Explicit { increments: Vec<u64> },
}

/// Whether a family can be explored numerically or only asymptotically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DeskScale,
    Asymptotic,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::DeskScale => "desk-scale",
            Regime::Asymptotic => "asymptotic — not desk-reproducible",
        }
    }
}

impl SparsenessFamily {
    pub fn regime(&self) -> Regime {
        match self {
            SparsenessFamily::LogSquared { .. } | SparsenessFamily::Factorial { .. } => {
                Regime::Asymptotic
            }
            _ => Regime::DeskScale,
        }
    }

    /// The ratio bound `δ` that the family promises, if any.
    pub fn declared_delta(&self) -> Option<f64> {
        match self {
            SparsenessFamily::LogSquared { delta, .. }
            | SparsenessFamily::Factorial { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            SparsenessFamily::Exponential { base } if !(*base > 1.0 && base.is_finite()) => {
                bad(format!("exponential base {base} must exceed 1"))
            }
            SparsenessFamily::LogSquared { c, delta } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("coefficient c = {c} must be positive"));
                }
                check_delta(*delta)
            }
            SparsenessFamily::Factorial { epsilon, delta } => {
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return bad(format!("ε = {epsilon} must be positive"));
                }
                check_delta(*delta)
            }
            SparsenessFamily::Explicit { increments } => {
                if increments.iter().any(|&b| b == 0) {
                    return bad("explicit increments must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn raw_increment(&self, j: u64) -> Result<BigUint> {
        match self {
            SparsenessFamily::Exponential { base } => {
                if base.fract() == 0.0 && *base < u32::MAX as f64 {
                    Ok(BigUint::from(*base as u32).pow(j as u32))
                } else {
                    rounded_growth_increment(j, Scalar::Value(*base), Scalar::Value(0.0), 0)
                }
            }
            SparsenessFamily::LogSquared { c, delta } => {
                rounded_growth_increment(j, Scalar::Reciprocal(*delta), Scalar::Value(*c), 2)
            }
            SparsenessFamily::Factorial { epsilon, delta } => rounded_growth_increment(
                j,
                Scalar::Reciprocal(*delta),
                Scalar::Reciprocal(*epsilon),
                1,
            ),
            SparsenessFamily::Explicit { increments } => increments
                .get(j as usize - 1)
                .map(|&b| BigUint::from(b))
                .ok_or_else(|| {
                    Error::InvalidSpec(format!(
                        "only {} explicit increments, j = {j} requested",
                        increments.len()
                    ))
                }),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "δ = {delta} must lie in (0, 1)"
        )))
    }
}

/// Full description of the lacunary set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsenessSpec {
    pub family: SparsenessFamily,
    pub j_max: usize,
    #[serde(default)]
    pub random_offsets: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SparsenessSpec {
    pub fn explicit(increments: Vec<u64>) -> Self {
        let j_max = increments.len();
        Self {
            family: SparsenessFamily::Explicit { increments },
            j_max,
            random_offsets: false,
            seed: 0,
        }
    }

    /// Explicit geometric increments `base^1, …, base^j_max`.
    pub fn geometric(base: u64, j_max: usize) -> Self {
        Self::explicit((1..=j_max as u32).map(|j| base.pow(j)).collect())
    }
}

/// Barrier positions `a_1 < a_2 < …` together with their generating data.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSet {
    increments: Vec<BigUint>,
    offsets: Vec<i64>,
    positions: Vec<BigUint>,
    gaps: Vec<BigUint>,
    small: Option<Vec<u64>>,
}

/// Positions below this bound also get a `u64` copy for fast evaluation.
pub const SMALL_POSITION_LIMIT: u64 = crate::phase::FAST_PATH_LIMIT / 4;

fn small_copy(positions: &[BigUint]) -> Option<Vec<u64>> {
    positions
        .iter()
        .map(|a| a.to_u64().filter(|&v| v < SMALL_POSITION_LIMIT))
        .collect()
}

impl BarrierSet {
    /// The empty set (free model).
    pub fn empty() -> Self {
        Self {
            increments: Vec::new(),
            offsets: Vec::new(),
            positions: Vec::new(),
            gaps: Vec::new(),
            small: Some(Vec::new()),
        }
    }

    /// Barriers at the given strictly increasing positions.
    pub fn from_positions(positions: Vec<BigUint>) -> Result<Self> {
        let mut previous = BigUint::zero();
        let mut gaps = Vec::with_capacity(positions.len());
        for (i, a) in positions.iter().enumerate() {
            if i > 0 && a <= &previous || a < &BigUint::from(2u32) && i == 0 {
                return Err(Error::InvalidSpec(
                    "positions must increase with gaps of at least 2".into(),
                ));
            }
            let gap = a - &previous;
            if gap < BigUint::from(2u32) {
                return Err(Error::InvalidSpec(format!(
                    "gap {gap} between barriers {i} and {} is below 2",
                    i + 1
                )));
            }
            gaps.push(gap);
            previous = a.clone();
        }
        Ok(Self {
            increments: gaps.clone(),
            offsets: vec![0; positions.len()],
            small: small_copy(&positions),
            positions,
            gaps,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Positions `a_1^ω, …` (1-based in the model, 0-based here).
    pub fn positions(&self) -> &[BigUint] {
        &self.positions
    }

    /// Nominal increments `β_j` before offsets.
    pub fn increments(&self) -> &[BigUint] {
        &self.increments
    }

    /// Actual distances between consecutive barriers, starting from site 0.
    pub fn gaps(&self) -> &[BigUint] {
        &self.gaps
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    /// Positions as decimal strings.
    pub fn positions_decimal(&self) -> Vec<String> {
        self.positions.iter().map(|a| a.to_str_radix(10)).collect()
    }

    /// Positions as `u64`, if they all fit.
    pub fn positions_u64(&self) -> Option<Vec<u64>> {
        self.positions.iter().map(|a| a.to_u64()).collect()
    }

    /// Cached `u64` positions when all lie below [`SMALL_POSITION_LIMIT`].
    pub fn small_positions(&self) -> Option<&[u64]> {
        self.small.as_deref()
    }

    /// Largest observed `β_{j−1}/β_j` over the nominal increments.
    pub fn observed_delta(&self) -> Option<f64> {
        self.increments
            .windows(2)
            .map(|w| (ln_biguint(&w[0]) - ln_biguint(&w[1])).exp())
            .reduce(f64::max)
    }

    /// Whether site `n` carries a barrier.
    pub fn contains(&self, n: &BigUint) -> bool {
        self.positions.binary_search(n).is_ok()
    }

    /// Index `m` of the last barrier with `a_m ≤ n` (0 if none).
    pub fn count_up_to(&self, n: &BigUint) -> usize {
        self.positions.partition_point(|a| a <= n)
    }

    /// Coupling `p_n`: `p` on barriers and 1 elsewhere.
    pub fn coupling_at(&self, n: &BigInt, p: Coupling) -> Result<f64> {
        if n.is_negative() {
            return Err(Error::Domain(format!(
                "lattice index {n} is negative; the boundary is handled by the caller"
            )));
        }
        let n = n.magnitude();
        Ok(if self.contains(n) { p.value() } else { 1.0 })
    }
}

/// Builds the barrier positions described by `spec`.
pub fn build_positions(spec: &SparsenessSpec) -> Result<BarrierSet> {
    spec.family.validate()?;
    if spec.j_max == 0 {
        return Err(Error::InvalidSpec("j_max must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut increments = Vec::with_capacity(spec.j_max);
    let mut offsets = Vec::with_capacity(spec.j_max);
    let mut positions = Vec::with_capacity(spec.j_max);
    let mut gaps = Vec::with_capacity(spec.j_max);
    let mut nominal = BigInt::zero();
    let mut previous = BigInt::zero();
    let two = BigUint::from(2u32);
    for j in 1..=spec.j_max as u64 {
        let raw = spec.family.raw_increment(j)?;
        let beta = match spec.family {
            SparsenessFamily::Explicit { .. } => raw,
            _ => raw.max(two.clone()),
        };
        if let (Some(delta), Some(prev)) = (spec.family.declared_delta(), increments.last()) {
            let log_ratio = ln_biguint(prev) - ln_biguint(&beta);
            if log_ratio > delta.ln() + 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "β_{}/β_{j} = {:.6} exceeds δ = {delta}",
                    j - 1,
                    log_ratio.exp()
                )));
            }
        }
        nominal += BigInt::from(beta.clone());
        let omega = if spec.random_offsets {
            let bound = j as i64;
            rng.gen_range(-bound..=bound)
        } else {
            0
        };
        let position = &nominal + omega;
        let gap = &position - &previous;
        if gap < BigInt::from(2) {
            return Err(Error::InvalidSpec(format!(
                "offset ω_{j} = {omega} leaves a gap of {gap} (< 2) before barrier {j}"
            )));
        }
        gaps.push(gap.to_biguint().expect("positive gap"));
        positions.push(position.to_biguint().expect("positive position"));
        previous = position;
        increments.push(beta);
        offsets.push(omega);
    }
    Ok(BarrierSet {
        increments,
        offsets,
        small: small_copy(&positions),
        positions,
        gaps,
    })
}

/// Barrier coupling `p ∈ (0, 1]`; `p = 1` is the free model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Coupling(f64);

impl Coupling {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::Domain(format!(
                "coupling p = {p} must lie in (0, 1]"
            )))
        }
    }

    pub fn free() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_free(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for Coupling {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Coupling::new(p)
    }
}

impl From<Coupling> for f64 {
    fn from(p: Coupling) -> f64 {
        p.0
    }
}

/// Closed window `[φ_-, φ_+]` strictly inside `(0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiWindow {
    pub lo: f64,
    pub hi: f64,
}

impl PhiWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi < std::f64::consts::PI) {
            return Err(Error::Domain(format!(
                "φ window [{lo}, {hi}] must lie strictly inside (0, π)"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Window of angles whose `λ = 2cos φ` lie in `[λ_a, λ_b]`.
    pub fn from_lambda(lambda_a: f64, lambda_b: f64) -> Result<Self> {
        if !(-2.0 < lambda_a && lambda_a < lambda_b && lambda_b < 2.0) {
            return Err(Error::Domain(format!(
                "λ window [{lambda_a}, {lambda_b}] must lie inside (−2, 2)"
            )));
        }
        Self::new((lambda_b / 2.0).acos(), (lambda_a / 2.0).acos())
    }

    /// Whether `λ = 0` (that is `φ = π/2`) lies in the window.
    pub fn contains_zero_energy(&self) -> bool {
        self.lo <= std::f64::consts::FRAC_PI_2 && std::f64::consts::FRAC_PI_2 <= self.hi
    }

    /// `count` equally spaced angles from `lo` to `hi` inclusive.
    pub fn grid(&self, count: usize) -> impl Iterator<Item = f64> + '_ {
        let step = if count > 1 {
            (self.hi - self.lo) / (count - 1) as f64
        } else {
            0.0
        };
        (0..count).map(move |i| self.lo + step * i as f64)
    }
}

/// A sparse Jacobi operator: barrier set and coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub barriers: BarrierSet,
    pub coupling: Coupling,
}

impl SparseModel {
    pub fn new(barriers: BarrierSet, coupling: Coupling) -> Self {
        Self { barriers, coupling }
    }

    pub fn free() -> Self {
        Self::new(BarrierSet::empty(), Coupling::free())
    }

    pub fn from_spec(spec: &SparsenessSpec, p: f64) -> Result<Self> {
        Ok(Self::new(build_positions(spec)?, Coupling::new(p)?))
    }

    pub fn p(&self) -> f64 {
        self.coupling.value()
    }

    /// Whether every coupling equals 1.
    pub fn is_free(&self) -> bool {
        self.coupling.is_free() || self.barriers.is_empty()
    }

    /// Coupling at a non-negative site (`u64` convenience form).
    pub fn coupling_at_site(&self, n: u64) -> f64 {
        if self.coupling.is_free() || !self.barriers.contains(&BigUint::from(n)) {
            1.0
        } else {
            self.p()
        }
    }

    /// Truncation index `N_j = a_j + 1` after the `j`-th barrier (1-based).
    pub fn truncation_after(&self, j: usize) -> Result<BigUint> {
        if j == 0 || j > self.barriers.len() {
            return Err(Error::Domain(format!(
                "barrier {j} does not exist (model has {})",
                self.barriers.len()
            )));
        }
        Ok(&self.barriers.positions()[j - 1] + BigUint::one())
    }
}

/// `ϑ(p) = (1 − p²)²/p²`.
pub fn coupling_strength(p: f64) -> f64 {
    let q = 1.0 - p * p;
    q * q / (p * p)
}

/// Growth factor `r = 1 + ϑ(p)/(4 − λ²)`.
pub fn r_factor(p: f64, lambda: f64) -> Result<f64> {
    if !(lambda.abs() < 2.0) {
        return Err(Error::Domain(format!(
            "|λ| = {} must be below 2",
            lambda.abs()
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "coupling p = {p} must lie in (0, 1]"
        )));
    }
    Ok(1.0 + coupling_strength(p) / (4.0 - lambda * lambda))
}

/// Local Hausdorff dimension `max(1 − ln r / ln β, 0)`.
pub fn hausdorff_dim(p: f64, beta: f64, lambda: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::Domain(format!("β = {beta} must exceed 1")));
    }
    let r = r_factor(p, lambda)?;
    Ok((1.0 - r.ln() / beta.ln()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn exponential_family_positions() {
        let spec = SparsenessSpec {
            family: SparsenessFamily::Exponential { base: 3.0 },
            j_max: 3,
            random_offsets: false,
            seed: 0,
        };
        let set = build_positions(&spec).unwrap();
        assert_eq!(set.increments(), &[big(3), big(9), big(27)]);
        assert_eq!(set.positions(), &[big(3), big(12), big(39)]);
    }

    #[test]
    fn explicit_cumulative_sum() {
        let set = build_positions(&SparsenessSpec::explicit(vec![2, 2, 2])).unwrap();
        assert_eq!(set.positions(), &[big(2), big(4), big(6)]);
    }

    #[test]
    fn log_squared_increments_against_high_precision_oracle() {
        // Reference values from a 200-digit mpmath evaluation of
        // round(2^j·exp(j·ln²j)).
        let spec = SparsenessSpec {
            family: SparsenessFamily::LogSquared { c: 1.0, delta: 0.5 },
            j_max: 20,
            random_offsets: false,
            seed: 0,
        };
        let set = build_positions(&spec).unwrap();
        assert_eq!(set.increments()[3], big(34886));
        assert_eq!(
            set.increments()[9].to_str_radix(10),
            "108680314516917967400120981"
        );
        assert_eq!(
            set.increments()[19].to_str_radix(10),
            "936161659720057932173917636199554711351068113490905212401605322182044504958715091845"
        );
    }

    #[test]
    fn log_squared_overflows_u64_early_but_stays_exact() {
        let spec = SparsenessSpec {
            family: SparsenessFamily::LogSquared { c: 1.0, delta: 0.5 },
            j_max: 16,
            random_offsets: false,
            seed: 0,
        };
        let set = build_positions(&spec).unwrap();
        assert!(set.positions_u64().is_none());
        assert_eq!(
            set.positions_decimal().last().unwrap(),
            &set.positions().last().unwrap().to_str_radix(10)
        );
    }

    #[test]
    fn delta_violation_is_rejected() {
        let spec = SparsenessSpec {
            family: SparsenessFamily::LogSquared {
                c: 0.01,
                delta: 0.9,
            },
            j_max: 5,
            random_offsets: false,
            seed: 0,
        };
        // β_1 and β_2 both round up to 2, so the ratio bound fails
        assert!(matches!(build_positions(&spec), Err(Error::InvalidSpec(_))));
        let good = SparsenessSpec {
            family: SparsenessFamily::Factorial {
                epsilon: 0.5,
                delta: 0.5,
            },
            ..spec.clone()
        };
        assert!(build_positions(&good).is_ok());
        let bad = SparsenessSpec {
            family: SparsenessFamily::Exponential { base: 0.5 },
            ..spec
        };
        assert!(matches!(build_positions(&bad), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn coupling_lookup() {
        let set = build_positions(&SparsenessSpec::explicit(vec![4, 16])).unwrap();
        let p = Coupling::new(0.3).unwrap();
        assert_eq!(set.coupling_at(&BigInt::from(4), p).unwrap(), 0.3);
        assert_eq!(set.coupling_at(&BigInt::from(5), p).unwrap(), 1.0);
        assert!(matches!(
            set.coupling_at(&BigInt::from(-1), p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn offsets_are_deterministic_and_bounded() {
        let spec = SparsenessSpec {
            family: SparsenessFamily::Exponential { base: 4.0 },
            j_max: 8,
            random_offsets: true,
            seed: 42,
        };
        let a = build_positions(&spec).unwrap();
        let b = build_positions(&spec).unwrap();
        assert_eq!(a, b);
        for (j, w) in a.offsets().iter().enumerate() {
            assert!(w.abs() <= j as i64 + 1);
        }
    }

    #[test]
    fn offsets_that_collide_are_an_error() {
        let spec = SparsenessSpec {
            family: SparsenessFamily::Explicit {
                increments: vec![2; 40],
            },
            j_max: 40,
            random_offsets: true,
            seed: 7,
        };
        assert!(matches!(build_positions(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn r_factor_values() {
        assert_eq!(r_factor(1.0, 0.7).unwrap(), 1.0);
        assert!((r_factor(0.5, 0.0).unwrap() - 25.0 / 16.0).abs() < 1e-15);
        assert!(r_factor(0.5, 1.999999).unwrap() > 1e5);
        assert!(matches!(r_factor(0.5, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hausdorff_dimension_values() {
        assert_eq!(hausdorff_dim(1.0, 3.0, 0.4).unwrap(), 1.0);
        let r = r_factor(0.5, 0.0).unwrap();
        assert!(hausdorff_dim(0.5, r, 0.0).unwrap().abs() < 1e-12);
        assert!((hausdorff_dim(0.5, r * r, 0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            hausdorff_dim(0.5, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn phi_window_from_lambda() {
        let w = PhiWindow::from_lambda(0.5, 1.5).unwrap();
        assert!((2.0 * w.lo.cos() - 1.5).abs() < 1e-14);
        assert!((2.0 * w.hi.cos() - 0.5).abs() < 1e-14);
        assert!(!w.contains_zero_energy());
        assert!(PhiWindow::new(0.0, 1.0).is_err());
    }
}
