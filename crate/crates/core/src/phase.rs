//! Multi-precision helpers: reduction of `m·φ` modulo 2π for integer `m` of
//! arbitrary size, correctly rounded growth increments, and conversions
//! between big integers, big floats and `f64`.

use std::cell::RefCell;
use std::f64::consts::TAU;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

const RM: RoundingMode = RoundingMode::ToEven;

/// Extra bits carried beyond the integer part of every reduction.
pub const GUARD_BITS: usize = 128;

/// Hard ceiling on the working precision of a single reduction.
pub const MAX_WORKING_BITS: usize = 1 << 24;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

fn with_consts<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

fn round_up_to_word(bits: usize) -> usize {
    bits.div_ceil(64) * 64
}

/// An angle split as `2π·turns + angle` with `angle ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedAngle {
    pub turns: BigInt,
    pub angle: f64,
}

impl ReducedAngle {
    pub fn zero() -> Self {
        Self {
            turns: BigInt::zero(),
            angle: 0.0,
        }
    }

    /// Builds a reduced angle from an `f64` value.
    pub fn from_f64(value: f64) -> Self {
        let turns = (value / TAU).floor();
        let mut angle = value - turns * TAU;
        let mut turns = BigInt::from(turns as i64);
        if angle >= TAU {
            angle -= TAU;
            turns += 1;
        }
        if angle < 0.0 {
            angle += TAU;
            turns -= 1;
        }
        Self { turns, angle }
    }

    /// Adds a small real offset, carrying whole turns exactly.
    pub fn add_f64(&self, delta: f64) -> Self {
        let shifted = Self::from_f64(self.angle + delta);
        Self {
            turns: &self.turns + shifted.turns,
            angle: shifted.angle,
        }
    }

    /// Adds another reduced angle.
    pub fn add(&self, other: &ReducedAngle) -> Self {
        let shifted = Self::from_f64(self.angle + other.angle);
        Self {
            turns: &self.turns + &other.turns + shifted.turns,
            angle: shifted.angle,
        }
    }

    /// Difference `self − other` as an `f64`; exact whenever the turn
    /// difference is small.
    pub fn difference(&self, other: &ReducedAngle) -> f64 {
        let dt = (&self.turns - &other.turns)
            .to_f64()
            .unwrap_or(f64::INFINITY);
        dt * TAU + (self.angle - other.angle)
    }

    /// The full value as `f64` (loses the fractional part once the turn
    /// count exceeds 2^52).
    pub fn to_f64(&self) -> f64 {
        self.turns.to_f64().unwrap_or(f64::INFINITY) * TAU + self.angle
    }
}

/// Converts a non-negative big integer into a big float with `bits` of precision.
pub fn biguint_to_bigfloat(n: &BigUint, bits: usize) -> BigFloat {
    if n.is_zero() {
        return BigFloat::from_u64(0, bits.max(64));
    }
    let words = n.to_u64_digits();
    let exponent = (words.len() * 64) as i32;
    let mut x = BigFloat::from_words(&words, Sign::Pos, exponent);
    x.set_precision(round_up_to_word(bits.max(64)), RM)
        .expect("precision change");
    x
}

/// Multiplies `x` by `2^k` without intermediate overflow.
pub fn ldexp(mut x: f64, mut k: i64) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k as i32)
}

/// Nearest `f64` to a finite big float.
pub fn bigfloat_to_f64(x: &BigFloat) -> Result<f64> {
    if x.is_zero() {
        return Ok(0.0);
    }
    let (words, _, sign, exponent, _) = x
        .as_raw_parts()
        .ok_or_else(|| Error::Precision("non-finite intermediate".into()))?;
    let hi = words[words.len() - 1] as f64;
    let lo = if words.len() > 1 {
        words[words.len() - 2] as f64
    } else {
        0.0
    };
    let e = exponent as i64;
    let mag = ldexp(hi, e - 64) + ldexp(lo, e - 128);
    Ok(if sign == Sign::Neg { -mag } else { mag })
}

/// Integer part of a big float that is already integral (e.g. after `floor`).
fn integral_bigfloat_to_bigint(x: &BigFloat) -> Result<BigInt> {
    if x.is_zero() {
        return Ok(BigInt::zero());
    }
    let (words, _, sign, exponent, _) = x
        .as_raw_parts()
        .ok_or_else(|| Error::Precision("non-finite intermediate".into()))?;
    let mantissa = BigUint::new(
        words
            .iter()
            .flat_map(|w| [(*w & 0xffff_ffff) as u32, (*w >> 32) as u32])
            .collect(),
    );
    let shift = exponent as i64 - 64 * words.len() as i64;
    let magnitude = if shift >= 0 {
        mantissa << (shift as usize)
    } else {
        mantissa >> ((-shift) as usize)
    };
    let value = BigInt::from(magnitude);
    Ok(if sign == Sign::Neg { -value } else { value })
}

/// Reduces `multiplier · phi` modulo 2π.
///
/// `phi` is taken as the exact binary value of the `f64`; the product is
/// formed exactly and divided by a value of 2π carrying
/// `bits(multiplier) + 64 + GUARD_BITS` bits, so the returned angle is
/// accurate to the last bit of an `f64`.
pub fn reduce_multiple(multiplier: &BigUint, phi: f64) -> Result<ReducedAngle> {
    if !phi.is_finite() {
        return Err(Error::Domain(format!("phase argument {phi} is not finite")));
    }
    if multiplier.is_zero() || phi == 0.0 {
        return Ok(ReducedAngle::zero());
    }
    if let Some(k) = multiplier.to_u64().filter(|&k| k < FAST_PATH_LIMIT) {
        if phi.abs() < 8.0 {
            return Ok(reduce_small_multiple(k, phi));
        }
    }
    reduce_multiple_big(multiplier, phi)
}

/// Multipliers below this bound use the double-double path.
pub const FAST_PATH_LIMIT: u64 = 1 << 40;

const TWO_PI_HI: f64 = TAU;
const TWO_PI_MID: f64 = 2.449_293_598_294_706_4e-16;
const TWO_PI_LO: f64 = -5.989_539_619_436_679_3e-33;

/// `k·φ mod 2π` for `k < 2^40`, `|φ| < 8`: the product is split exactly into
/// two doubles and reduced against a three-part 2π (Cody–Waite).
pub fn reduce_small_multiple(k: u64, phi: f64) -> ReducedAngle {
    let kf = k as f64;
    let hi = kf * phi;
    let lo = kf.mul_add(phi, -hi);
    let q = (hi / TWO_PI_HI).floor();
    let mut r = (-q).mul_add(TWO_PI_HI, hi);
    r = (-q).mul_add(TWO_PI_MID, r);
    r = (-q).mul_add(TWO_PI_LO, r);
    r += lo;
    ReducedAngle::from_f64(r).with_extra_turns(BigInt::from(q as i64))
}

/// Multi-precision reduction used for large multipliers.
pub fn reduce_multiple_big(multiplier: &BigUint, phi: f64) -> Result<ReducedAngle> {
    if multiplier.is_zero() || phi == 0.0 {
        return Ok(ReducedAngle::zero());
    }
    let bits = round_up_to_word(multiplier.bits() as usize + 64 + GUARD_BITS);
    if bits > MAX_WORKING_BITS {
        return Err(Error::Precision(format!(
            "reduction needs {bits} bits, above the limit of {MAX_WORKING_BITS}"
        )));
    }
    let m = biguint_to_bigfloat(multiplier, bits);
    let p = BigFloat::from_f64(phi, 64);
    let product = m.mul(&p, bits, RM);
    let two_pi = with_consts(|cc| cc.pi(bits, RM)).mul(&BigFloat::from_u64(2, 64), bits, RM);
    let quotient = product.div(&two_pi, bits, RM);
    let floor = quotient.floor();
    let fraction = quotient.sub(&floor, bits, RM);
    if floor.is_nan() || fraction.is_nan() {
        return Err(Error::Precision("reduction produced NaN".into()));
    }
    let turns = integral_bigfloat_to_bigint(&floor)?;
    let frac = bigfloat_to_f64(&fraction)?;
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::Precision(format!(
            "reduced fraction {frac} outside [0, 1]"
        )));
    }
    Ok(ReducedAngle::from_f64(frac * TAU).with_extra_turns(turns))
}

impl ReducedAngle {
    fn with_extra_turns(mut self, turns: BigInt) -> Self {
        self.turns += turns;
        self
    }
}

/// A real parameter given either directly or as the reciprocal of an `f64`,
/// so that values such as `1/δ` or `1/ε` are formed in full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Value(f64),
    Reciprocal(f64),
}

impl Scalar {
    pub fn to_f64(self) -> f64 {
        match self {
            Scalar::Value(v) => v,
            Scalar::Reciprocal(v) => 1.0 / v,
        }
    }

    fn to_bigfloat(self, bits: usize) -> BigFloat {
        match self {
            Scalar::Value(v) => BigFloat::from_f64(v, 64),
            Scalar::Reciprocal(v) => {
                BigFloat::from_u64(1, 64).div(&BigFloat::from_f64(v, 64), bits, RM)
            }
        }
    }
}

/// `round(base^j · exp(coefficient · j · (ln j)^log_power))`, evaluated in
/// multi-precision arithmetic so that the nearest integer is exact even when
/// it has thousands of digits.
pub fn rounded_growth_increment(
    j: u64,
    base: Scalar,
    coefficient: Scalar,
    log_power: u32,
) -> Result<BigUint> {
    let base_f64 = base.to_f64();
    if !(base_f64.is_finite() && base_f64 > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "growth base {base_f64} must be positive"
        )));
    }
    let coeff_f64 = coefficient.to_f64();
    if !coeff_f64.is_finite() {
        return Err(Error::InvalidSpec(
            "growth coefficient is not finite".into(),
        ));
    }
    let jf = j as f64;
    let ln_j = if j > 1 { jf.ln() } else { 0.0 };
    let log_estimate = jf * base_f64.ln() + coeff_f64 * jf * ln_j.powi(log_power as i32);
    if !log_estimate.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "increment exponent at j = {j} is not finite"
        )));
    }
    let bits = round_up_to_word(
        (log_estimate.max(0.0) / std::f64::consts::LN_2) as usize + 64 + GUARD_BITS,
    );
    if bits > MAX_WORKING_BITS {
        return Err(Error::ResourceLimit(format!(
            "increment at j = {j} needs {bits} bits"
        )));
    }
    let value = with_consts(|cc| {
        let jb = BigFloat::from_u64(j, bits);
        let ln_base = base.to_bigfloat(bits).ln(bits, RM, cc);
        let mut log_term = BigFloat::from_u64(1, bits);
        if j > 1 {
            let ln_jb = jb.ln(bits, RM, cc);
            for _ in 0..log_power {
                log_term = log_term.mul(&ln_jb, bits, RM);
            }
        } else if log_power > 0 {
            log_term = BigFloat::from_u64(0, bits);
        }
        let exponent = coefficient
            .to_bigfloat(bits)
            .mul(&jb, bits, RM)
            .mul(&log_term, bits, RM)
            .add(&jb.mul(&ln_base, bits, RM), bits, RM);
        exponent.exp(bits, RM, cc)
    });
    let rounded = value.add(&BigFloat::from_f64(0.5, 64), bits, RM).floor();
    integral_bigfloat_to_bigint(&rounded)?
        .to_biguint()
        .ok_or_else(|| Error::Precision("negative increment".into()))
}

/// Natural logarithm of a positive big integer, accurate to `f64` precision.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().map(f64::ln).unwrap_or(f64::INFINITY);
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `f64` value of a big integer (infinite when out of range).
pub fn biguint_to_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn small_multiples_match_f64_reduction() {
        for (m, phi) in [(1u64, 0.3), (7, 1.1), (1000, 2.5), (123_456, 0.001)] {
            let r = reduce_multiple(&BigUint::from(m), phi).unwrap();
            let direct = (m as f64 * phi).rem_euclid(TAU);
            assert!((r.angle - direct).abs() < 1e-9, "m={m} phi={phi}");
            assert_eq!(
                r.turns,
                BigInt::from(((m as f64 * phi) / TAU).floor() as i64)
            );
        }
    }

    #[test]
    fn exact_multiple_of_pi_reduces_near_pi() {
        // fl(π) = π − 1.2246467991473532e-16, so for odd m the reduced
        // angle is π − m·1.2246…e-16.
        let m = BigUint::from(3u32).pow(21);
        let r = reduce_multiple(&m, PI).unwrap();
        let expected = PI - 3f64.powi(21) * 1.2246467991473532e-16;
        assert!(
            (r.angle - expected).abs() < 1e-12,
            "{} vs {}",
            r.angle,
            expected
        );
    }

    #[test]
    fn huge_multiplier_is_consistent_with_splitting() {
        // (a + b)·φ mod 2π must equal a·φ + b·φ mod 2π.
        let a = BigUint::from(10u32).pow(60) + BigUint::from(12345u32);
        let b = BigUint::from(10u32).pow(45) + BigUint::from(777u32);
        let phi = 0.7361;
        let ra = reduce_multiple(&a, phi).unwrap();
        let rb = reduce_multiple(&b, phi).unwrap();
        let rab = reduce_multiple(&(&a + &b), phi).unwrap();
        let sum = ra.add(&rb);
        assert!((sum.angle - rab.angle).abs() < 1e-12);
        assert_eq!(sum.turns, rab.turns);
    }

    #[test]
    fn fast_path_agrees_with_multi_precision_path() {
        let mut k = 3u64;
        let mut phi = 0.123_456_789;
        for _ in 0..200 {
            let fast = reduce_small_multiple(k, phi);
            let slow = reduce_multiple_big(&BigUint::from(k), phi).unwrap();
            assert_eq!(fast.turns, slow.turns, "k={k} phi={phi}");
            assert!((fast.angle - slow.angle).abs() < 2e-15, "k={k} phi={phi}");
            k = (k * 7 + 11) % (1 << 40);
            phi = (phi * 1.618_033_988_75).rem_euclid(PI);
        }
    }

    #[test]
    fn biguint_round_trip_through_bigfloat() {
        let n = BigUint::from(3u32).pow(100);
        let x = biguint_to_bigfloat(&n, 256);
        let back = integral_bigfloat_to_bigint(&x.floor()).unwrap();
        assert_eq!(back, BigInt::from(n));
    }

    #[test]
    fn growth_increment_small_case_matches_f64() {
        let got =
            rounded_growth_increment(4, Scalar::Reciprocal(0.5), Scalar::Value(1.0), 2).unwrap();
        let expected = (16.0 * (4.0 * 4f64.ln().powi(2)).exp()).round();
        assert_eq!(got, BigUint::from(expected as u64));
    }

    #[test]
    fn integer_base_powers_are_exact() {
        let got = rounded_growth_increment(60, Scalar::Value(3.0), Scalar::Value(0.0), 0).unwrap();
        assert_eq!(got, BigUint::from(3u32).pow(60));
        let got =
            rounded_growth_increment(45, Scalar::Reciprocal(0.25), Scalar::Value(0.0), 1).unwrap();
        assert_eq!(got, BigUint::from(4u32).pow(45));
    }

    #[test]
    fn ln_of_large_integer() {
        let n = BigUint::from(7u32).pow(500);
        assert!((ln_biguint(&n) - 500.0 * 7f64.ln()).abs() < 1e-9);
    }
}
