use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{Float, One, ToPrimitive, Zero};
use proptest::prelude::*;

use apscast::numerics::{bessel_j0, gauss_legendre_rule, integrate, pinv_nested, pinv_psd, PinvSpec, QuadratureSpec};

/// `sum_k (-x^2/4)^k / (k!)^2` in 400-bit fixed point. Every operation is exact
/// up to one truncation of 2^-400 per term, so the alternating-series
/// cancellation that ruins the f64 series for large `x` does not matter here.
fn j0_series_oracle(x: f64) -> f64 {
    const FRAC: usize = 400;
    let (mant, exp, _) = Float::integer_decode(x.abs());
    let mut fx = BigInt::from(mant) << FRAC;
    if exp >= 0 {
        fx <<= exp as usize;
    } else {
        fx >>= (-exp) as usize;
    }
    let q = (&fx * &fx) >> (FRAC + 2);
    let one = BigInt::one() << FRAC;
    let mut term = one.clone();
    let mut sum = one;
    let mut k: u64 = 1;
    loop {
        term = -((&term * &q) >> FRAC) / BigInt::from(k * k);
        if term.is_zero() {
            break;
        }
        sum += &term;
        k += 1;
    }
    sum.to_f64().unwrap() / 2f64.powi(FRAC as i32)
}

#[test]
fn series_oracle_sanity() {
    assert_eq!(j0_series_oracle(0.0), 1.0);
    // J0(1) and the first zero
    assert!((j0_series_oracle(1.0) - 0.765_197_686_557_966_6).abs() < 1e-16);
    assert!(j0_series_oracle(2.404_825_557_695_773).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn j0_is_even(x in -1e4f64..1e4) {
        prop_assert_eq!(bessel_j0(x).unwrap(), bessel_j0(-x).unwrap());
    }

    #[test]
    fn j0_matches_series_oracle(x in -50.0f64..50.0) {
        let got = bessel_j0(x).unwrap();
        let want = j0_series_oracle(x);
        prop_assert!((got - want).abs() <= 1e-10, "x = {x}: {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1(
        n in 2usize..=32,
        coeffs in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let (x, w) = gauss_legendre_rule(n);
        let deg = 2 * n - 1;
        let mut exact = 0.0;
        let mut scale = 0.0;
        for (d, c) in coeffs.iter().take(deg + 1).enumerate() {
            if d % 2 == 0 {
                exact += c * 2.0 / (d + 1) as f64;
            }
            scale += c.abs() * 2.0 / (d + 1) as f64;
        }
        let got: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * coeffs.iter().take(deg + 1).rev().fold(0.0, |acc, c| acc * xi + c))
            .sum();
        prop_assert!((got - exact).abs() <= 1e-12 * scale, "n = {n}: {got} vs {exact}");
    }

    #[test]
    fn one_panel_integrates_polynomials_exactly(
        order in 2usize..=32,
        a in -3.0f64..0.0,
        width in 0.1f64..3.0,
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..8),
    ) {
        prop_assume!(coeffs.len() <= 2 * order);
        let b = a + width;
        let spec = QuadratureSpec { panel_order: order, ..QuadratureSpec::default() };
        let p = |t: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let anti = |t: f64| coeffs.iter().enumerate().map(|(d, c)| c * t.powi(d as i32 + 1) / (d + 1) as f64).sum::<f64>();
        let exact = anti(b) - anti(a);
        let scale: f64 = coeffs.iter().enumerate().map(|(d, c)| c.abs() * 3f64.powi(d as i32) * width).sum();
        let got = integrate(p, a, b, &spec).unwrap();
        prop_assert!(got.converged);
        prop_assert!((got.value - exact).abs() <= 1e-12 * scale, "{} vs {exact}", got.value);
    }
}

/// `U diag(lambda) U^T` with Haar-like `U` and eigenvalues either zero or in
/// `[1e-3, 1]`, so the numerical rank is unambiguous.
fn psd_matrix() -> impl Strategy<Value = (DMatrix<f64>, usize)> {
    (1usize..=60).prop_flat_map(|l| {
        (prop::collection::vec(-1.0f64..1.0, l * l), prop::collection::vec(prop_oneof![Just(0.0), 1e-3f64..1.0], l))
            .prop_map(move |(entries, lambda)| {
                let q = DMatrix::from_vec(l, l, entries).qr().q();
                let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda.clone()));
                let g = &q * d * q.transpose();
                let g = (&g + g.transpose()) * 0.5;
                (g, lambda.iter().filter(|v| **v > 0.0).count())
            })
    })
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pinv_satisfies_moore_penrose((g, rank) in psd_matrix()) {
        let p = pinv_psd(&g, &PinvSpec::default()).unwrap();
        let h = &p.matrix;
        prop_assert_eq!(p.rank, rank);
        if rank > 0 {
            prop_assert!(rel(&(&g * h * &g), &g) <= 1e-8);
            prop_assert!(rel(&(h * &g * h), h) <= 1e-8);
        }
        prop_assert!(rel(&h.transpose(), h) <= 1e-12 || rank == 0);
        let gh = &g * h;
        let asym = (&gh - gh.transpose()).norm() / gh.norm().max(1.0);
        prop_assert!(asym <= 1e-8, "asym {asym:e} rank {rank} of {}", g.nrows());
    }

    #[test]
    fn nested_inverse_is_a_reflexive_generalized_inverse((g, rank) in psd_matrix(), split in 0.0f64..1.0) {
        let m = ((g.nrows() as f64) * split) as usize;
        let spec = PinvSpec::default();
        let full = pinv_psd(&g, &spec).unwrap();
        let (p, _) = pinv_nested(&g, m, &spec, full).unwrap();
        let h = &p.matrix;
        prop_assert_eq!(p.rank, rank);
        // staged evaluation is as accurate as its first stage, which inverts
        // the leading block alone; that block can be far worse conditioned than G
        let cond1 = pinv_psd(&g.view((0, 0), (m, m)).into_owned(), &spec).unwrap().condition.unwrap_or(1.0);
        let tol = 1e-8f64.max(10.0 * f64::EPSILON * cond1);
        if rank > 0 {
            let (ghg, hgh) = (rel(&(&g * h * &g), &g), rel(&(h * &g * h), h));
            prop_assert!(ghg <= tol && hgh <= tol, "GHG {ghg:e}, HGH {hgh:e}, leading-block cond {cond1:e}");
        }
    }
}
