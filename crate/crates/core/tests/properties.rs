use num_complex::Complex64;
use proptest::prelude::*;
use qdev_core::deviation::{main_bound, rate_function, Scgf, MeasurementSetup};
use qdev_core::inequalities::{lipschitz_norm, poincare_slack, spectral_gap, variance, LipschitzContext};
use qdev_core::lindblad::{dirichlet_form, stationary_state, GeneratorContext};
use qdev_core::models::{depolarizing, depolarizing_jump_index};
use qdev_core::spectral::{inner_product, trace};
use qdev_core::trajectories::{clopper_pearson, evolve_state};
use qdev_core::{CMatrix, DensityOperator, FaithfulState, HermitianOperator, InnerProductKind};

fn matrix(d: usize, re: &[f64], im: &[f64]) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| Complex64::new(re[i * d + j], im[i * d + j]))
}

fn hermitian(d: usize, re: &[f64], im: &[f64]) -> CMatrix {
    let m = matrix(d, re, im);
    (&m + m.adjoint()) * Complex64::from(0.5)
}

fn entries(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0..1.0f64, d * d), prop::collection::vec(-1.0..1.0f64, d * d))
}

/// Faithful diagonal state with eigenvalues bounded away from zero.
fn faithful(d: usize) -> impl Strategy<Value = FaithfulState> {
    prop::collection::vec(0.05..1.0f64, d).prop_map(|w| {
        let total: f64 = w.iter().sum();
        FaithfulState::diagonal(&w.iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()
    })
}

fn depolarizing_ctx(sigma: &FaithfulState) -> GeneratorContext {
    stationary_state(&depolarizing(sigma)).unwrap()
}

/// Qubit depolarizing with a diffusive and a counting channel.
fn two_channel_setup() -> MeasurementSetup {
    let ctx = depolarizing_ctx(&FaithfulState::maximally_mixed(2));
    let b = MeasurementSetup::unit_direction(4, depolarizing_jump_index(2, 0, 1));
    let p = MeasurementSetup::unit_direction(4, depolarizing_jump_index(2, 1, 0));
    MeasurementSetup::new(ctx, vec![b, p], 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scgf_is_convex_and_vanishes_at_zero(a in prop::array::uniform2(-3.0..3.0f64), b in prop::array::uniform2(-3.0..3.0f64)) {
        let scgf = Scgf::new(&two_channel_setup()).unwrap();
        prop_assert!(scgf.value(&[0.0, 0.0]).abs() < 1e-12);
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        prop_assert!(scgf.value(&mid) <= 0.5 * (scgf.value(&a) + scgf.value(&b)) + 1e-10);
    }

    #[test]
    fn exponent_is_monotone_in_threshold(r in 0.0..1.5f64, dr in 0.0..0.5f64) {
        let ctx = depolarizing_ctx(&FaithfulState::maximally_mixed(2));
        let u = MeasurementSetup::unit_direction(4, depolarizing_jump_index(2, 0, 1));
        let setup = MeasurementSetup::new(ctx, vec![u], 1).unwrap();
        let rho = setup.ctx().stationary().clone();
        let lo = main_bound(&setup, &rho, &[r]).unwrap().exponent;
        let hi = main_bound(&setup, &rho, &[r + dr]).unwrap().exponent;
        prop_assert!(lo >= 0.0);
        prop_assert!(hi >= lo - 1e-10);
    }

    #[test]
    fn rate_is_nonnegative(s in -1.0..1.0f64) {
        let ctx = depolarizing_ctx(&FaithfulState::maximally_mixed(3));
        let u = MeasurementSetup::unit_direction(9, depolarizing_jump_index(3, 0, 2));
        let setup = MeasurementSetup::new(ctx, vec![u], 1).unwrap();
        let p = &rate_function(&setup, &[vec![s], vec![0.0]]).unwrap();
        prop_assert!(p[0].value >= 0.0);
        prop_assert!(p[1].value.abs() < 1e-10);
    }

    #[test]
    fn inner_products_are_positive_and_conjugate_symmetric(
        sigma in faithful(3), (xr, xi) in entries(3), (yr, yi) in entries(3)
    ) {
        let x = matrix(3, &xr, &xi);
        let y = matrix(3, &yr, &yi);
        for kind in [InnerProductKind::Kms, InnerProductKind::Gns, InnerProductKind::Bkm] {
            let xx = inner_product(kind, &sigma, &x, &x).unwrap();
            prop_assert!(xx.re >= -1e-14 && xx.im.abs() < 1e-12);
            let xy = inner_product(kind, &sigma, &x, &y).unwrap();
            let yx = inner_product(kind, &sigma, &y, &x).unwrap();
            prop_assert!((xy - yx.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_norm_is_homogeneous_and_shift_invariant((re, im) in entries(3), c in -3.0..3.0f64, shift in -2.0..2.0f64) {
        let ctx = depolarizing_ctx(&FaithfulState::maximally_mixed(3));
        let lip = LipschitzContext::new(&ctx).unwrap();
        let x = hermitian(3, &re, &im);
        let norm = |m: CMatrix| lipschitz_norm(&lip, &HermitianOperator::new(m).unwrap()).unwrap();
        let base = norm(x.clone());
        prop_assert!((norm(&x * Complex64::from(c)) - c.abs() * base).abs() < 1e-10 * (1.0 + base));
        let shifted = &x + CMatrix::identity(3, 3) * Complex64::from(shift);
        prop_assert!((norm(shifted) - base).abs() < 1e-10 * (1.0 + base));
    }

    #[test]
    fn depolarizing_energy_is_variance_and_poincare_holds(sigma in faithful(3), (re, im) in entries(3)) {
        let ctx = depolarizing_ctx(&sigma);
        let x = hermitian(3, &re, &im);
        let energy = dirichlet_form(&ctx, &x).unwrap();
        let var = variance(&sigma, &x).unwrap();
        prop_assert!((energy - var).abs() < 1e-10);
        let gap = spectral_gap(&ctx).unwrap();
        prop_assert!(poincare_slack(&ctx, gap, &x).unwrap() >= -1e-10);
    }

    #[test]
    fn evolution_preserves_trace_and_positivity(sigma in faithful(2), (re, im) in entries(2), t in 0.0..5.0f64) {
        let ctx = depolarizing_ctx(&sigma);
        let h = hermitian(2, &re, &im);
        let rho = DensityOperator::project(&(&h * &h + CMatrix::identity(2, 2) * Complex64::from(1e-3))).unwrap();
        let out = evolve_state(&ctx, &rho, t).unwrap();
        prop_assert!((trace(&out).re - 1.0).abs() < 1e-10);
        prop_assert!(DensityOperator::new(out).is_ok());
    }

    #[test]
    fn clopper_pearson_brackets_the_frequency(n in 1usize..2000, frac in 0.0..1.0f64) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = clopper_pearson(k, n, 0.99).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}
