//! Truncated Taylor jets `h^[k] = h^(k)(x)/k!`, `k = 0..=order`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::Serialize;

use crate::error::{Error, Result};

/// Normalized derivatives of a scalar function at `base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorJet {
    pub base: f64,
    pub coeffs: Vec<f64>,
}

impl TaylorJet {
    pub fn new(base: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::OrderMismatch {
                expected: 1,
                found: 0,
            });
        }
        Ok(Self { base, coeffs })
    }

    pub fn constant(base: f64, value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { base, coeffs }
    }

    /// The identity function `x ↦ x` expanded at `base`.
    pub fn variable(base: f64, order: usize) -> Self {
        let mut jet = Self::constant(base, base, order);
        if order >= 1 {
            jet.coeffs[1] = 1.0;
        }
        jet
    }

    /// Jet of a polynomial `Σ c_i x^i` expanded at `base`.
    pub fn polynomial(base: f64, monomial: &[f64], order: usize) -> Self {
        let x = Self::variable(base, order);
        let mut acc = Self::constant(base, 0.0, order);
        for &c in monomial.iter().rev() {
            acc = &(&acc * &x) + c;
        }
        acc
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `h^(k) = k!·h^[k]`.
    pub fn derivative_value(&self, k: usize) -> f64 {
        self.coeffs[k] * factorial(k)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::OrderMismatch {
                expected: self.order(),
                found: other.order(),
            });
        }
        if self.base != other.base {
            return Err(Error::BasePointMismatch(self.base, other.base));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.coeffs.len();
        let coeffs = (0..n)
            .map(|k| (0..=k).map(|i| self.coeffs[i] * other.coeffs[k - i]).sum())
            .collect();
        Ok(Self {
            base: self.base,
            coeffs,
        })
    }

    pub fn try_div(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let d0 = other.coeffs[0];
        if d0 == 0.0 {
            return Err(Error::JetDivisionByZero);
        }
        let n = self.coeffs.len();
        let mut q = vec![0.0; n];
        for k in 0..n {
            let s: f64 = (1..=k).map(|i| other.coeffs[i] * q[k - i]).sum();
            q[k] = (self.coeffs[k] - s) / d0;
        }
        Ok(Self {
            base: self.base,
            coeffs: q,
        })
    }

    pub fn recip(&self) -> Result<Self> {
        Self::constant(self.base, 1.0, self.order()).try_div(self)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|c| c * factor)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            base: self.base,
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            base: self.base,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Jet of `h'`, one order shorter: `(h')^[k] = (k+1)·h^[k+1]`.
    pub fn derivative(&self) -> Result<Self> {
        if self.order() == 0 {
            return Err(Error::OrderMismatch {
                expected: 1,
                found: 0,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Ok(Self {
            base: self.base,
            coeffs,
        })
    }

    /// Jet of the antiderivative with value `value` at the base point,
    /// one order longer.
    pub fn integral(&self, value: f64) -> Self {
        let coeffs = std::iter::once(value)
            .chain(
                self.coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c / (k + 1) as f64),
            )
            .collect();
        Self {
            base: self.base,
            coeffs,
        }
    }

    /// Drops coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::OrderMismatch {
                expected: order,
                found: self.order(),
            });
        }
        Ok(Self {
            base: self.base,
            coeffs: self.coeffs[..=order].to_vec(),
        })
    }

    /// Replaces the constant term, keeping the derivatives.
    pub fn with_value(&self, value: f64) -> Self {
        let mut jet = self.clone();
        jet.coeffs[0] = value;
        jet
    }

    pub fn exp(&self) -> Self {
        let outer = exp_coeffs(self.value(), self.order());
        compose_unchecked(&outer, self)
    }

    pub fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = sin_cos_coeffs(self.value(), self.order());
        (compose_unchecked(&s, self), compose_unchecked(&c, self))
    }

    pub fn ln(&self) -> Result<Self> {
        if self.value() <= 0.0 {
            return Err(Error::Domain(format!(
                "logarithm of a jet with value {}",
                self.value()
            )));
        }
        let d = self
            .derivative()?
            .try_div(&self.truncate(self.order() - 1)?)?;
        Ok(d.integral(self.value().ln()))
    }

    /// Jet of `atan2(y, x)` with `self = y`; the constant term is
    /// `atan2(y0, x0)` and the higher terms come from
    /// `(x y' − y x')/(x² + y²)`.
    pub fn atan2(&self, x: &Self) -> Result<Self> {
        self.check(x)?;
        let value = self.value().atan2(x.value());
        if self.order() == 0 {
            return Ok(Self::constant(self.base, value, 0));
        }
        let lower = self.order() - 1;
        let y = self.truncate(lower)?;
        let xl = x.truncate(lower)?;
        let numerator = xl
            .try_mul(&self.derivative()?)?
            .try_sub(&y.try_mul(&x.derivative()?)?)?;
        let denominator = xl.try_mul(&xl)?.try_add(&y.try_mul(&y)?)?;
        Ok(numerator.try_div(&denominator)?.integral(value))
    }
}

impl Add for &TaylorJet {
    type Output = TaylorJet;
    fn add(self, rhs: &TaylorJet) -> TaylorJet {
        self.try_add(rhs)
            .expect("jet addition of incompatible jets")
    }
}

impl Sub for &TaylorJet {
    type Output = TaylorJet;
    fn sub(self, rhs: &TaylorJet) -> TaylorJet {
        self.try_sub(rhs)
            .expect("jet subtraction of incompatible jets")
    }
}

impl Mul for &TaylorJet {
    type Output = TaylorJet;
    fn mul(self, rhs: &TaylorJet) -> TaylorJet {
        self.try_mul(rhs).expect("jet product of incompatible jets")
    }
}

impl Add<f64> for &TaylorJet {
    type Output = TaylorJet;
    fn add(self, rhs: f64) -> TaylorJet {
        let mut jet = self.clone();
        jet.coeffs[0] += rhs;
        jet
    }
}

impl Mul<f64> for &TaylorJet {
    type Output = TaylorJet;
    fn mul(self, rhs: f64) -> TaylorJet {
        self.scale(rhs)
    }
}

impl Neg for &TaylorJet {
    type Output = TaylorJet;
    fn neg(self) -> TaylorJet {
        self.scale(-1.0)
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `exp^[k](x0) = e^{x0}/k!`.
pub fn exp_coeffs(x0: f64, order: usize) -> TaylorJet {
    let e = x0.exp();
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut term = e;
    for k in 0..=order {
        if k > 0 {
            term /= k as f64;
        }
        coeffs.push(term);
    }
    TaylorJet { base: x0, coeffs }
}

/// Jets of `sin` and `cos` at `x0`.
pub fn sin_cos_coeffs(x0: f64, order: usize) -> (TaylorJet, TaylorJet) {
    let (s, c) = x0.sin_cos();
    // derivatives cycle through (sin, cos, −sin, −cos)
    let cycle_sin = [s, c, -s, -c];
    let cycle_cos = [c, -s, -c, s];
    let mut sin = Vec::with_capacity(order + 1);
    let mut cos = Vec::with_capacity(order + 1);
    let mut inv_fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            inv_fact /= k as f64;
        }
        sin.push(cycle_sin[k % 4] * inv_fact);
        cos.push(cycle_cos[k % 4] * inv_fact);
    }
    (
        TaylorJet {
            base: x0,
            coeffs: sin,
        },
        TaylorJet {
            base: x0,
            coeffs: cos,
        },
    )
}

/// `(1/x)^[k] = (−1)^k / x^{k+1}`.
pub fn recip_coeffs(x0: f64, order: usize) -> Result<TaylorJet> {
    if x0 == 0.0 {
        return Err(Error::JetDivisionByZero);
    }
    let coeffs = (0..=order)
        .map(|k| (-1f64).powi(k as i32) / x0.powi(k as i32 + 1))
        .collect();
    Ok(TaylorJet { base: x0, coeffs })
}

/// Partial Bell-type sums
/// `P[k][n] = Σ_{i_1+…+i_k = n, i_j ≥ 1} f^[i_1]⋯f^[i_k]`, built by
/// `P[k][n] = Σ_i f^[i]·P[k−1][n−i]`.
pub fn partition_products(inner: &[f64]) -> Vec<Vec<f64>> {
    let n_max = inner.len() - 1;
    let mut table = vec![vec![0.0; n_max + 1]; n_max + 1];
    table[0][0] = 1.0;
    for k in 1..=n_max {
        for n in k..=n_max {
            table[k][n] = (1..=n - (k - 1))
                .map(|i| inner[i] * table[k - 1][n - i])
                .sum();
        }
    }
    table
}

/// Scott's formula
/// `(g∘f)^[n] = Σ_{k=1}^{n} g^[k](f) Σ_{i_1+…+i_k=n} f^[i_1]⋯f^[i_k]`.
///
/// The outer jet must be expanded at the inner jet's value.
pub fn scott_compose(outer: &TaylorJet, inner: &TaylorJet) -> Result<TaylorJet> {
    if outer.order() < inner.order() {
        return Err(Error::OrderMismatch {
            expected: inner.order(),
            found: outer.order(),
        });
    }
    if outer.base != inner.value() {
        return Err(Error::BasePointMismatch(outer.base, inner.value()));
    }
    Ok(compose_unchecked(outer, inner))
}

fn compose_unchecked(outer: &TaylorJet, inner: &TaylorJet) -> TaylorJet {
    let table = partition_products(&inner.coeffs);
    let n_max = inner.order();
    let coeffs = (0..=n_max)
        .map(|n| {
            if n == 0 {
                outer.coeffs[0]
            } else {
                (1..=n).map(|k| outer.coeffs[k] * table[k][n]).sum()
            }
        })
        .collect();
    TaylorJet {
        base: inner.base,
        coeffs,
    }
}

/// Composition by substituting `f − f(x0)` into the outer series with
/// Horner's scheme in truncated arithmetic.
pub fn substitute_compose(outer: &TaylorJet, inner: &TaylorJet) -> Result<TaylorJet> {
    if outer.order() < inner.order() {
        return Err(Error::OrderMismatch {
            expected: inner.order(),
            found: outer.order(),
        });
    }
    if outer.base != inner.value() {
        return Err(Error::BasePointMismatch(outer.base, inner.value()));
    }
    let n = inner.order();
    let shifted = inner.with_value(0.0);
    let mut acc = TaylorJet::constant(inner.base, outer.coeffs[n], n);
    for k in (0..n).rev() {
        acc = &(&acc * &shifted) + outer.coeffs[k];
    }
    Ok(acc)
}

/// Order-`k` derivative by central differences with Richardson
/// extrapolation; the tableau entry is chosen by Ridders' error estimate.
/// Returns `(value, error estimate)`. `h0` is the largest step.
pub fn finite_derivative(f: impl Fn(f64) -> f64, x: f64, k: usize, h0: f64) -> (f64, f64) {
    let level = |h: f64| {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 0..=k {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * f(x + (k as f64 / 2.0 - i as f64) * h);
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        acc / h.powi(k as i32)
    };
    const RATIO: f64 = 1.2;
    const LEVELS: usize = 10;
    let mut previous: Vec<f64> = Vec::new();
    let mut best = f64::NAN;
    let mut best_error = f64::INFINITY;
    let mut h = h0;
    for _ in 0..LEVELS {
        let mut row = vec![level(h)];
        let mut factor = RATIO * RATIO;
        for j in 1..=previous.len() {
            let value = (factor * row[j - 1] - previous[j - 1]) / (factor - 1.0);
            let error = (value - row[j - 1])
                .abs()
                .max((value - previous[j - 1]).abs());
            if error <= best_error {
                best_error = error;
                best = value;
            }
            row.push(value);
            factor *= RATIO * RATIO;
        }
        previous = row;
        h /= RATIO;
    }
    (best, best_error)
}
