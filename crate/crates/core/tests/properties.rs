use std::f64::consts::PI;

use num_bigint::BigUint;
use proptest::prelude::*;
use sparse_jacobi::fourier_decay::{decay_fit, log_grid, resonance_info};
use sparse_jacobi::jet::{scott_compose, substitute_compose, TaylorJet};
use sparse_jacobi::kronecker_sum::{bisection_eigenvalues, minkowski_sum, tridiagonal_eigen};
use sparse_jacobi::prufer_transfer::{prufer_trajectory, transfer_matrix_phi};
use sparse_jacobi::sparse_model::{
    build_positions, hausdorff_dim, SparseModel, SparsenessFamily, SparsenessSpec,
};

fn explicit_model() -> impl Strategy<Value = SparseModel> {
    (prop::collection::vec(2u64..200, 1..6), 0.2f64..1.0).prop_map(|(increments, p)| {
        SparseModel::from_spec(&SparsenessSpec::explicit(increments), p).unwrap()
    })
}

/// Increments growing by a factor of at least four.
fn sparse_model() -> impl Strategy<Value = SparseModel> {
    (2u64..20, 4u64..10, 1usize..5, 0.5f64..1.0).prop_map(|(first, ratio, count, p)| {
        let increments = (0..count as u32).map(|j| first * ratio.pow(j)).collect();
        SparseModel::from_spec(&SparsenessSpec::explicit(increments), p).unwrap()
    })
}

fn jet(order: usize) -> impl Strategy<Value = (f64, Vec<f64>)> {
    (-1.0f64..1.0, prop::collection::vec(-1.0f64..1.0, order + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transfer_matrices_are_unimodular(
        model in explicit_model(),
        phi in 0.01f64..PI - 0.01,
        extra in 0u64..50,
    ) {
        let n = model.truncation_after(model.barriers.len()).unwrap() + BigUint::from(extra);
        let t = transfer_matrix_phi(&n, phi, &model).unwrap();
        prop_assert!((t.det() - 1.0).abs() < 1e-10 * t.norm().powi(2).max(1.0));
    }

    #[test]
    fn composition_routes_agree(
        outer in prop::collection::vec(-1.0f64..1.0, 7),
        (inner_base, inner) in jet(6),
    ) {
        let inner = TaylorJet::new(inner_base, inner).unwrap();
        let outer = TaylorJet::new(inner.value(), outer).unwrap();
        let scott = scott_compose(&outer, &inner).unwrap();
        let substituted = substitute_compose(&outer, &inner).unwrap();
        for (a, b) in scott.coeffs.iter().zip(&substituted.coeffs) {
            prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }
}

proptest! {
    #[test]
    fn hausdorff_dimension_is_monotone(
        p in 0.05f64..1.0,
        dp in 0.0f64..0.5,
        beta in 1.5f64..1e6,
        factor in 1.0f64..100.0,
        lambda in -1.99f64..1.99,
    ) {
        let q = (p + dp).min(1.0);
        let base = hausdorff_dim(p, beta, lambda).unwrap();
        prop_assert!(hausdorff_dim(q, beta, lambda).unwrap() >= base);
        prop_assert!(hausdorff_dim(p, beta * factor, lambda).unwrap() >= base);
    }

    #[test]
    fn offsets_are_reproducible(seed in any::<u64>(), j_max in 2usize..8) {
        let spec = SparsenessSpec {
            family: SparsenessFamily::Exponential { base: 10.0 },
            j_max,
            random_offsets: true,
            seed,
        };
        let first = build_positions(&spec).unwrap();
        let second = build_positions(&spec).unwrap();
        prop_assert_eq!(first.positions(), second.positions());
        prop_assert_eq!(first.offsets(), second.offsets());
    }

    #[test]
    fn derivative_reindexes_coefficients((base, coeffs) in jet(8)) {
        let rho = TaylorJet::new(base, coeffs).unwrap();
        let d = rho.derivative().unwrap();
        for k in 0..8 {
            prop_assert_eq!(d.coeffs[k], (k + 1) as f64 * rho.coeffs[k + 1]);
        }
    }

    #[test]
    fn decay_fit_is_scale_equivariant(
        exponent in -2.0f64..0.0,
        wiggle in prop::collection::vec(-0.3f64..0.3, 16),
        scale in 1e-3f64..1e3,
    ) {
        let t = log_grid(2.0, 2e4, 16);
        let g: Vec<f64> = t
            .iter()
            .zip(&wiggle)
            .map(|(t, w)| t.powf(exponent) * w.exp())
            .collect();
        let scaled: Vec<f64> = g.iter().map(|v| scale * v).collect();
        let fit = decay_fit(&t, &g, 0..16, None).unwrap();
        let other = decay_fit(&t, &scaled, 0..16, None).unwrap();
        prop_assert!((fit.exponent - other.exponent).abs() < 1e-12);
        prop_assert!((other.intercept - fit.intercept - scale.ln()).abs() < 1e-12);
    }

    #[test]
    fn unwrapped_angles_move_less_than_pi(
        model in sparse_model(),
        phi in 0.3f64..PI - 0.3,
    ) {
        let j = model.barriers.len();
        let total: f64 = model.truncation_after(j).unwrap().to_string().parse().unwrap();
        let step = 0.25 / total;
        let here = prufer_trajectory(phi, &model, j).unwrap().theta_unwrapped();
        let there = prufer_trajectory(phi + step, &model, j).unwrap().theta_unwrapped();
        for (a, b) in here.iter().zip(&there) {
            prop_assert!((b - a).abs() < PI);
        }
    }

    #[test]
    fn proxy_resonances_never_exceed_n_star(fraction in 0.0f64..1.0, p in 0.3f64..0.95) {
        let model = SparseModel::from_spec(&SparsenessSpec::geometric(8, 4), p).unwrap();
        let t = 8.0 * 512f64.powf(fraction);
        let window = ((1.5f64 / 2.0).acos(), (0.5f64 / 2.0).acos());
        let info = resonance_info(t, &model, window).unwrap();
        prop_assert!(info.proxy_critical_phis.len() as u64 <= info.n_star);
    }

    #[test]
    fn truncated_spectrum_is_symmetric_and_matches_bisection(
        couplings in prop::collection::vec(0.1f64..1.0, 1..40),
    ) {
        let system = tridiagonal_eigen(&couplings, false).unwrap();
        let bisection = bisection_eigenvalues(&couplings);
        for (a, b) in system.values.iter().zip(&bisection) {
            prop_assert!((a - b).abs() < 1e-11);
        }
        for (a, b) in system.values.iter().zip(system.values.iter().rev()) {
            prop_assert!((a + b).abs() < 1e-11);
        }
        let weight: f64 = system.weights().iter().sum();
        prop_assert!((weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kronecker_spectrum_is_minkowski_sum(
        couplings in prop::collection::vec(0.1f64..1.0, 1..10),
    ) {
        let l = couplings.len() + 1;
        let j = nalgebra::DMatrix::from_fn(l, l, |a, b| match () {
            _ if b == a + 1 => couplings[a],
            _ if a == b + 1 => couplings[b],
            _ => 0.0,
        });
        let identity = nalgebra::DMatrix::<f64>::identity(l, l);
        let k = j.kronecker(&identity) + identity.kronecker(&j);
        let mut dense: Vec<f64> = k.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let sums = minkowski_sum(&tridiagonal_eigen(&couplings, false).unwrap().values);
        for (a, b) in dense.iter().zip(&sums) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
