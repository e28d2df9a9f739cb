//! Truncated Jacobi spectra, the Kronecker sum `K = J⊗I + I⊗J`, and the
//! convolution of spectral measures it produces.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_decay::GammaEvaluator;
use crate::quadrature::{composite, Rule};
use crate::sparse_model::SparseModel;
use crate::spectral_measure::TestFunction;

/// Largest truncation accepted by the eigen solvers.
pub const MAX_TRUNCATION: usize = 4096;

/// Off-diagonal entries `p_0, …, p_{L−2}` of the leading `L×L` block.
pub fn truncated_couplings(l: usize, model: &SparseModel) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::Domain("truncation size must be positive".into()));
    }
    if l > MAX_TRUNCATION {
        return Err(Error::ResourceLimit(format!(
            "L = {l} exceeds the limit {MAX_TRUNCATION}"
        )));
    }
    Ok((0..l as u64 - 1)
        .map(|n| model.coupling_at_site(n))
        .collect())
}

/// Eigenvalues (ascending) of a zero-diagonal symmetric tridiagonal matrix
/// with the given off-diagonal, and either the first components or the full
/// eigenvectors (column `i` of the row-major `vectors` belongs to value `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub first_components: Vec<f64>,
    pub vectors: Option<Vec<Vec<f64>>>,
}

impl EigenSystem {
    /// `|⟨δ_0, v_i⟩|²`.
    pub fn weights(&self) -> Vec<f64> {
        self.first_components.iter().map(|c| c * c).collect()
    }
}

/// Implicit QL with Wilkinson-type shifts on `(diag 0, offdiag)`.
pub fn tridiagonal_eigen(offdiag: &[f64], full_vectors: bool) -> Result<EigenSystem> {
    let n = offdiag.len() + 1;
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = offdiag
        .iter()
        .copied()
        .chain(std::iter::once(0.0))
        .collect();
    let mut z: Vec<Vec<f64>> = if full_vectors {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    } else {
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        vec![row]
    };
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 60 {
                return Err(Error::Tolerance {
                    what: "QL iteration".into(),
                    achieved: e[l].abs(),
                    requested: f64::EPSILON,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let first_components = order.iter().map(|&i| z[0][i]).collect();
    let vectors = full_vectors.then(|| {
        z.iter()
            .map(|row| order.iter().map(|&i| row[i]).collect())
            .collect()
    });
    Ok(EigenSystem {
        values,
        first_components,
        vectors,
    })
}

/// Number of eigenvalues below `x` (Sturm sequence of the `LDLᵀ` pivots).
pub fn sturm_count(offdiag: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for &b in offdiag {
        let previous = if q == 0.0 {
            f64::EPSILON * (b.abs() + 1.0)
        } else {
            q
        };
        q = -x - b * b / previous;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalues by bisection on the Sturm count, independent of QL.
pub fn bisection_eigenvalues(offdiag: &[f64]) -> Vec<f64> {
    let n = offdiag.len() + 1;
    let bound = 2.0 * offdiag.iter().fold(0.0f64, |m, b| m.max(b.abs())) + 1e-12;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if sturm_count(offdiag, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Sorted eigenvalues of the leading `L×L` block of `J`.
pub fn truncated_eigenvalues(l: usize, model: &SparseModel) -> Result<Vec<f64>> {
    Ok(tridiagonal_eigen(&truncated_couplings(l, model)?, false)?.values)
}

/// The spectrum of `J_L⊗I + I⊗J_L` as the sorted pairwise sums.
pub fn minkowski_sum(values: &[f64]) -> Vec<f64> {
    let mut sums: Vec<f64> = values
        .iter()
        .flat_map(|a| values.iter().map(move |b| a + b))
        .collect();
    sums.sort_by(f64::total_cmp);
    sums
}

/// Largest `‖K(v_i⊗v_j) − (λ_i + λ_j)(v_i⊗v_j)‖` over the given index
/// pairs, applying `K` through `K vec(X) = vec(JX + XJ)` with
/// `X = v_i v_jᵀ`.
pub fn kronecker_residual(
    offdiag: &[f64],
    system: &EigenSystem,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    let vectors = system
        .vectors
        .as_ref()
        .ok_or_else(|| Error::Domain("full eigenvectors required".into()))?;
    let n = system.values.len();
    let column = |i: usize| -> Vec<f64> { vectors.iter().map(|row| row[i]).collect() };
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let left = if k > 0 {
                    offdiag[k - 1] * v[k - 1]
                } else {
                    0.0
                };
                let right = if k + 1 < n {
                    offdiag[k] * v[k + 1]
                } else {
                    0.0
                };
                left + right
            })
            .collect()
    };
    let residuals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (vi, vj) = (column(i), column(j));
            let (ji, jj) = (apply(&vi), apply(&vj));
            let sum = system.values[i] + system.values[j];
            let mut total = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let k = ji[a] * vj[b] + vi[a] * jj[b];
                    let r = k - sum * vi[a] * vj[b];
                    total += r * r;
                }
            }
            total.sqrt()
        })
        .collect();
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Evidence that `spec(J_L⊗I + I⊗J_L)` equals the pairwise sums of
/// `spec(J_L)`: the vectors `v_i⊗v_j` are orthonormal up to
/// `orthogonality_defect` and each is an eigenvector of `K` with residual at
/// most `r_i + r_j ≤ pair_residual_bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinkowskiCheck {
    pub l: usize,
    pub max_eigen_residual: f64,
    pub orthogonality_defect: f64,
    pub pair_residual_bound: f64,
    pub sampled_kronecker_residual: f64,
}

impl MinkowskiCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.pair_residual_bound <= tolerance
            && self.orthogonality_defect <= tolerance
            && self.sampled_kronecker_residual <= tolerance
    }
}

/// Builds a [`MinkowskiCheck`] for the given off-diagonal, applying `K`
/// directly to `samples` index pairs.
pub fn minkowski_check(offdiag: &[f64], samples: usize) -> Result<MinkowskiCheck> {
    let system = tridiagonal_eigen(offdiag, true)?;
    let vectors = system.vectors.as_ref().expect("requested full vectors");
    let n = system.values.len();
    let max_eigen_residual = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|k| {
                    let left = if k > 0 {
                        offdiag[k - 1] * vectors[k - 1][i]
                    } else {
                        0.0
                    };
                    let right = if k + 1 < n {
                        offdiag[k] * vectors[k + 1][i]
                    } else {
                        0.0
                    };
                    (left + right - system.values[i] * vectors[k][i]).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max);
    let orthogonality_defect = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    let dot: f64 = vectors.iter().map(|row| row[i] * row[j]).sum();
                    (dot - if i == j { 1.0 } else { 0.0 }).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let pairs: Vec<(usize, usize)> = (0..samples)
        .map(|k| ((k * 7919) % n, (k * 104_729 + 13) % n))
        .collect();
    Ok(MinkowskiCheck {
        l: n,
        max_eigen_residual,
        orthogonality_defect,
        pair_residual_bound: 2.0 * max_eigen_residual,
        sampled_kronecker_residual: kronecker_residual(offdiag, &system, &pairs)?,
    })
}

/// Where a convolution density came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    /// Inverse Fourier transform of `|γ|²`.
    SquaredTransform,
    /// Weighted pairwise sums of truncated eigenvalues.
    EigenHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolutionDensity {
    pub lambda_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub source: DensitySource,
    /// `∫|γ(t)|² dt` over the sampled range.
    pub l2_indicator: Option<f64>,
    /// Total mass of the density on the grid.
    pub mass: f64,
}

/// Samples `γ(t_k)`, `t_k = kΔt`, `k = 0..K`; negative times follow from
/// `γ(−t) = conj γ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSamples {
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl GammaSamples {
    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    /// Running values of `∫_{−T}^{T} |γ|² dt` (trapezoid) for
    /// `T = kΔt`.
    pub fn cumulative_l2(&self) -> Vec<f64> {
        let mut total = 0.0;
        let mut out = Vec::with_capacity(self.values.len());
        for (k, v) in self.values.iter().enumerate() {
            if k > 0 {
                let previous = self.values[k - 1].norm_sqr();
                total += self.dt * (previous + v.norm_sqr());
            }
            out.push(total);
        }
        out
    }
}

/// Samples `γ` of `|f|² dρ_N` (truncation after barrier `j`) until
/// `|γ|² ≤ tail_tolerance·γ(0)²` over the last quarter of the range, doubling
/// the range up to `t_cap`.
pub fn sample_gamma(
    f: &TestFunction,
    j: usize,
    model: &SparseModel,
    dt: f64,
    t_cap: f64,
    tail_tolerance: f64,
) -> Result<GammaSamples> {
    check_spacing(dt)?;
    let evaluator = GammaEvaluator::new(f, j, model, t_cap, 1e-13)?;
    let g0 = evaluator.gamma0();
    let mut t_max = 32.0f64.min(t_cap);
    loop {
        let count = (t_max / dt).ceil() as usize + 1;
        let values: Vec<Complex64> = (0..count)
            .into_par_iter()
            .map(|k| evaluator.fourier(k as f64 * dt))
            .collect();
        let tail = values[3 * count / 4..]
            .iter()
            .map(|v| v.norm_sqr())
            .fold(0.0, f64::max);
        if tail <= tail_tolerance * g0 * g0 {
            return Ok(GammaSamples { dt, values });
        }
        if t_max >= t_cap {
            return Err(Error::Tolerance {
                what: format!(
                    "|γ|² tail on [{:.1}, {t_max:.1}]; extend the t-range beyond {t_cap}",
                    0.75 * t_max
                ),
                achieved: tail / (g0 * g0),
                requested: tail_tolerance,
            });
        }
        t_max = (2.0 * t_max).min(t_cap);
    }
}

fn check_spacing(dt: f64) -> Result<()> {
    if dt > 0.0 && dt < PI / 4.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Δt = {dt} must lie in (0, π/4) to avoid aliasing on (−4, 4)"
        )))
    }
}

/// `(1/2π) ∫ |γ(t)|² e^{−itλ} dt` on `lambda_grid` by the trapezoid rule in
/// `t`. For real even `γ` this is the self-convolution of the measure.
pub fn convolution_density(
    samples: &GammaSamples,
    lambda_grid: &[f64],
) -> Result<ConvolutionDensity> {
    check_spacing(samples.dt)?;
    if samples.values.len() < 2 {
        return Err(Error::Degenerate("need at least two γ samples".into()));
    }
    let squares: Vec<f64> = samples.values.iter().map(|v| v.norm_sqr()).collect();
    let last = squares.len() - 1;
    let values: Vec<f64> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let sum: f64 = squares
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    let weight = match k {
                        0 => 1.0,
                        k if k == last => 1.0,
                        _ => 2.0,
                    };
                    weight * s * (k as f64 * samples.dt * lambda).cos()
                })
                .sum();
            sum * samples.dt / (2.0 * PI)
        })
        .collect();
    let mass = trapezoid(lambda_grid, &values);
    Ok(ConvolutionDensity {
        lambda_grid: lambda_grid.to_vec(),
        values,
        source: DensitySource::SquaredTransform,
        l2_indicator: samples.cumulative_l2().last().copied(),
        mass,
    })
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// `∫ g(x) g(λ − x) dx` by composite Gauss over the support of `g`.
pub fn direct_self_convolution(
    density: &(impl Fn(f64) -> f64 + Sync),
    support: (f64, f64),
    lambda: f64,
) -> f64 {
    let (a, b) = support;
    let lo = a.max(lambda - b);
    let hi = b.min(lambda - a);
    if hi <= lo {
        return 0.0;
    }
    composite(&Rule::gauss_legendre(20), lo, hi, 64, &|x: f64| {
        density(x) * density(lambda - x)
    })
}

/// Eigenvalue pairs weighted by `f(λ_i)² f(λ_j)² |v_i(0)|² |v_j(0)|²`,
/// binned on `[−4, 4]`.
pub fn eigen_histogram(
    l: usize,
    model: &SparseModel,
    f: &TestFunction,
    bins: usize,
) -> Result<ConvolutionDensity> {
    if bins < 2 {
        return Err(Error::Degenerate(format!("{bins} bins")));
    }
    let system = tridiagonal_eigen(&truncated_couplings(l, model)?, false)?;
    let weights: Vec<f64> = system
        .values
        .iter()
        .zip(system.weights())
        .map(|(&v, w)| {
            let fv = f.value(v);
            fv * fv * w
        })
        .collect();
    let width = 8.0 / bins as f64;
    let mut mass = vec![0.0; bins];
    for (a, wa) in system.values.iter().zip(&weights) {
        if *wa == 0.0 {
            continue;
        }
        for (b, wb) in system.values.iter().zip(&weights) {
            let sum = a + b;
            let index =
                (((sum + 4.0) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            mass[index] += wa * wb;
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "no eigenvalue weight falls inside the support of f".into(),
        ));
    }
    Ok(ConvolutionDensity {
        lambda_grid: (0..bins).map(|i| -4.0 + width * (i as f64 + 0.5)).collect(),
        values: mass.iter().map(|m| m / width).collect(),
        source: DensitySource::EigenHistogram,
        l2_indicator: None,
        mass: total,
    })
}

/// Kolmogorov–Smirnov distance between the normalized eigen histogram and
/// the normalized inverse-transform density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramComparison {
    pub l: usize,
    pub bins: usize,
    pub ks_distance: f64,
    pub histogram: ConvolutionDensity,
    pub transform: ConvolutionDensity,
}

/// Compares both routes to the spectral measure of `K` for `δ_0⊗δ_0`
/// weighted by `f⊗f`; `samples` carry `γ` of the same model.
pub fn histogram_vs_convolution(
    l: usize,
    model: &SparseModel,
    f: &TestFunction,
    bins: usize,
    samples: &GammaSamples,
) -> Result<HistogramComparison> {
    let histogram = eigen_histogram(l, model, f, bins)?;
    let fine: Vec<f64> = (0..=bins * 16)
        .map(|i| -4.0 + 8.0 * i as f64 / (bins * 16) as f64)
        .collect();
    let transform = convolution_density(samples, &fine)?;
    let mut transform_cdf = vec![0.0; fine.len()];
    for i in 1..fine.len() {
        transform_cdf[i] = transform_cdf[i - 1]
            + 0.5 * (fine[i] - fine[i - 1]) * (transform.values[i] + transform.values[i - 1]);
    }
    let transform_total = *transform_cdf.last().unwrap_or(&1.0);
    let histogram_width = 8.0 / bins as f64;
    let mut histogram_cdf = 0.0;
    let mut ks_distance: f64 = 0.0;
    for i in 1..=bins {
        histogram_cdf += histogram.values[i - 1] * histogram_width / histogram.mass;
        let reference = transform_cdf[i * 16] / transform_total;
        ks_distance = ks_distance.max((histogram_cdf - reference).abs());
    }
    Ok(HistogramComparison {
        l,
        bins,
        ks_distance,
        histogram,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_model::{Coupling, SparsenessSpec};
    use crate::spectral_measure::free_density;
    use nalgebra::DMatrix;

    fn free() -> SparseModel {
        SparseModel::free()
    }

    fn symmetric_bump() -> TestFunction {
        TestFunction::wide(-1.5, 1.5, 0.0).unwrap()
    }

    fn one_barrier() -> SparseModel {
        SparseModel::from_spec(&SparsenessSpec::explicit(vec![300]), 0.6).unwrap()
    }

    #[test]
    fn free_dirichlet_eigenvalues() {
        let values = truncated_eigenvalues(3, &free()).unwrap();
        let expected = [-(2f64.sqrt()), 0.0, 2f64.sqrt()];
        for (v, e) in values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-14);
        }
        let sums = minkowski_sum(&values);
        assert_eq!(sums.len(), 9);
        for l in [10, 257] {
            let values = truncated_eigenvalues(l, &free()).unwrap();
            for (k, v) in values.iter().enumerate() {
                let exact = -2.0 * ((k + 1) as f64 * PI / (l + 1) as f64).cos();
                assert!((v - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ql_matches_sturm_bisection() {
        let model =
            SparseModel::from_spec(&SparsenessSpec::explicit(vec![5, 20, 60]), 0.4).unwrap();
        let offdiag = truncated_couplings(200, &model).unwrap();
        let ql = tridiagonal_eigen(&offdiag, false).unwrap();
        let bisection = bisection_eigenvalues(&offdiag);
        for (a, b) in ql.values.iter().zip(&bisection) {
            assert!((a - b).abs() < 1e-10);
        }
        let total: f64 = ql.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_is_symmetric() {
        let model = SparseModel::from_spec(&SparsenessSpec::explicit(vec![3, 9, 27]), 0.7).unwrap();
        let values = truncated_eigenvalues(101, &model).unwrap();
        for (a, b) in values.iter().zip(values.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_kronecker_spectrum_is_minkowski_sum() {
        let model = SparseModel::from_spec(&SparsenessSpec::explicit(vec![4, 9]), 0.5).unwrap();
        let l = 18;
        let offdiag = truncated_couplings(l, &model).unwrap();
        let j = DMatrix::from_fn(l, l, |a, b| {
            if b == a + 1 {
                offdiag[a]
            } else if a == b + 1 {
                offdiag[b]
            } else {
                0.0
            }
        });
        let identity = DMatrix::<f64>::identity(l, l);
        let k = j.kronecker(&identity) + identity.kronecker(&j);
        let mut dense: Vec<f64> = k.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let sums = minkowski_sum(&tridiagonal_eigen(&offdiag, false).unwrap().values);
        for (a, b) in dense.iter().zip(&sums) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn kronecker_residuals_at_l_256() {
        let model = SparseModel::from_spec(&SparsenessSpec::explicit(vec![8, 64]), 0.6).unwrap();
        let offdiag = truncated_couplings(256, &model).unwrap();
        let system = tridiagonal_eigen(&offdiag, true).unwrap();
        let pairs: Vec<(usize, usize)> = (0..16).map(|k| (k * 17 % 256, k * 41 % 256)).collect();
        assert!(kronecker_residual(&offdiag, &system, &pairs).unwrap() < 1e-12);
        let check = minkowski_check(&offdiag, 32).unwrap();
        assert!(check.passed(1e-12), "{check:?}");
    }

    #[test]
    fn free_self_convolution_matches_direct() {
        let f = symmetric_bump();
        let barrier_free = SparseModel::new(one_barrier().barriers, Coupling::free());
        let samples = sample_gamma(&f, 1, &barrier_free, 0.5, 400.0, 1e-20).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| -3.99 + 7.98 * i as f64 / 400.0).collect();
        let density = convolution_density(&samples, &grid).unwrap();
        let g = |x: f64| {
            let fv = f.value(x);
            fv * fv * free_density(x)
        };
        let mut worst: f64 = 0.0;
        for (&lambda, &value) in grid.iter().zip(&density.values) {
            worst = worst.max((value - direct_self_convolution(&g, f.support(), lambda)).abs());
            assert!(value > -1e-8);
        }
        assert!(worst < 1e-4, "{worst}");
        for (a, b) in density.values.iter().zip(density.values.iter().rev()) {
            assert!((a - b).abs() < 1e-12);
        }
        let peak = density.values.iter().fold(0.0f64, |m, v| m.max(*v));
        for (&lambda, &value) in grid.iter().zip(&density.values) {
            if lambda.abs() > 3.0 {
                assert!(value.abs() < 1e-6 * peak);
            }
        }
        let g0 = samples.values[0].re;
        assert!((density.mass - g0 * g0).abs() < 1e-6);
    }

    #[test]
    fn short_range_is_reported() {
        let f = symmetric_bump();
        let err = sample_gamma(&f, 1, &one_barrier(), 0.5, 40.0, 1e-20).unwrap_err();
        assert!(matches!(err, Error::Tolerance { .. }));
        assert!(sample_gamma(&f, 1, &one_barrier(), 1.0, 40.0, 1e-20).is_err());
    }

    #[test]
    fn sparse_l2_indicator_converges() {
        let f = symmetric_bump();
        let samples = sample_gamma(&f, 1, &one_barrier(), 0.5, 1e5, 1e-16).unwrap();
        let cumulative = samples.cumulative_l2();
        let total = *cumulative.last().unwrap();
        let decade = cumulative[cumulative.len() / 10];
        assert!((total - decade) / total < 0.01);
    }

    #[test]
    fn histogram_agrees_with_transform() {
        let f = symmetric_bump();
        let free_barriers = SparseModel::new(one_barrier().barriers, Coupling::free());
        let samples = sample_gamma(&f, 1, &free_barriers, 0.5, 400.0, 1e-20).unwrap();
        let small = histogram_vs_convolution(512, &free_barriers, &f, 200, &samples).unwrap();
        let large = histogram_vs_convolution(1024, &free_barriers, &f, 200, &samples).unwrap();
        assert!(large.ks_distance < 0.02, "{}", large.ks_distance);
        assert!(large.ks_distance <= small.ks_distance);

        let sparse = one_barrier();
        let samples = sample_gamma(&f, 1, &sparse, 0.5, 1e5, 1e-16).unwrap();
        let cmp = histogram_vs_convolution(1024, &sparse, &f, 200, &samples).unwrap();
        assert!(cmp.ks_distance < 0.05, "{}", cmp.ks_distance);
    }

    #[test]
    fn truncation_limit() {
        assert!(matches!(
            truncated_eigenvalues(5000, &free()),
            Err(Error::ResourceLimit(_))
        ));
    }
}
