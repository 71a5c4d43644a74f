use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;
use std::time::Instant;

use apscast::array_model::{build_function_set, Link, UlaConfig};
use apscast::experiments::{
    oracle_residual, run_fig1, run_fig2, run_fig3, sweep_generic_bound, synthesize_covariance, ApsModel, Normalization,
    OracleSpec, Peak, Pipeline, PipelineConfig, BOUND_SLACK, FIG3_POINTS,
};
use apscast::hilbert::{gram_matrix, projection_residual, AngularFunction, GridFunction, SupportSet};
use apscast::numerics::{pinv_psd, PinvSpec, QuadratureSpec};

fn upper_half() -> SupportSet {
    SupportSet::new([(0.0, FRAC_PI_2)]).unwrap()
}

fn table1() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| Pipeline::build(&PipelineConfig::table1(Some(upper_half()))).unwrap())
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

#[test]
fn zero_spectrum_synthesizes_zero_covariance() {
    let fs = build_function_set(&UlaConfig::table1(), None).unwrap();
    let s = synthesize_covariance(&ApsModel::zero(), &fs, Link::Uplink, &quad()).unwrap();
    assert!(s.vector.iter().all(|v| *v == 0.0));
}

#[test]
fn narrow_broadside_peak_gives_flat_covariance() {
    let cfg = UlaConfig { n_antennas: 2, ..UlaConfig::table1() };
    let fs = build_function_set(&cfg, None).unwrap();
    let s = 1e-4;
    let rho =
        ApsModel::new(vec![Peak { center: 0.0, scale: s, weight: 1.0 }], Normalization::Raw, None, &quad()).unwrap();
    let l1 = 2.0 * s * (1.0 - (-FRAC_PI_2 / s).exp());
    let r = synthesize_covariance(&rho, &fs, Link::Uplink, &quad()).unwrap();
    for z in r.cov.first_col() {
        assert!((z.re - l1).abs() <= 1e-6 * l1, "{z}");
        assert!(z.im.abs() <= 1e-6 * l1, "{z}");
    }
}

#[test]
fn two_path_pair_on_the_reference_array() {
    let p = table1();
    let rho = ApsModel::two_path(&quad()).unwrap();
    let (up, down) = apscast::experiments::synthesize_pair(&rho, &p.no_si.fs, &quad()).unwrap();
    assert_eq!(up.cov.n(), 30);
    assert!(up.unconverged.is_empty() && down.unconverged.is_empty());
    // the diagonal is the total power, the same on both links
    assert!((up.vector[0] - down.vector[0]).abs() < 1e-12);
    assert_eq!(up.vector[30], 0.0);
}

#[test]
fn support_lowers_the_largest_bound() {
    let f = run_fig1(table1()).unwrap();
    assert!(f.comparison.max_bound_si < f.comparison.max_bound_no_si);
    assert!(f.to_csv().starts_with("k,bound_no_si,bound_si\n1,"));
}

#[test]
fn without_support_the_two_reports_coincide() {
    let cfg =
        PipelineConfig { array: UlaConfig { n_antennas: 4, ..UlaConfig::table1() }, ..PipelineConfig::table1(None) };
    let f = run_fig1(&Pipeline::build(&cfg).unwrap()).unwrap();
    assert_eq!(f.no_si, f.si);
    assert!(f.comparison.rows.iter().all(|r| r.delta == 0.0));
}

#[test]
fn small_array_smoke_run_is_fast() {
    let t = Instant::now();
    let cfg = PipelineConfig {
        array: UlaConfig { n_antennas: 4, ..UlaConfig::table1() },
        ..PipelineConfig::table1(Some(upper_half()))
    };
    run_fig1(&Pipeline::build(&cfg).unwrap()).unwrap();
    assert!(t.elapsed().as_secs_f64() < 1.0, "{:?}", t.elapsed());
}

#[test]
fn truncated_two_path_respects_the_bound() {
    let p = table1();
    let rho = ApsModel::two_path(&quad()).unwrap().truncated(&upper_half(), &quad()).unwrap();
    let f = run_fig2(p, &rho).unwrap();
    for r in &f.rows {
        assert!(r.err_si <= r.bound_si + BOUND_SLACK, "slot {}: {} > {}", r.k, r.err_si, r.bound_si);
        assert!(r.err_no_si <= r.bound_no_si + BOUND_SLACK, "slot {}", r.k);
    }
    assert_eq!(f.norm_outside, 0.0);
}

#[test]
fn exact_two_path_leaks_only_within_the_allowance() {
    let f = run_fig2(table1(), &ApsModel::two_path(&quad()).unwrap()).unwrap();
    assert!(f.norm_outside > 0.0);
    assert!(f.max_excess_si <= f.leakage_allowance, "{} > {}", f.max_excess_si, f.leakage_allowance);
    assert!(f.max_err_si < 1e-2, "{}", f.max_err_si);
    assert!(f.rows.iter().any(|r| r.err_no_si > f.max_err_si));
}

#[test]
fn zero_spectrum_gives_flat_curves() {
    let f = run_fig3(table1(), &ApsModel::zero(), FIG3_POINTS).unwrap();
    for g in [&f.rho_true, &f.rho_est_no_si, &f.rho_est_si] {
        assert!(g.values.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn estimates_reproduce_the_uplink_covariance_on_the_grid() {
    let p = table1();
    let rho = ApsModel::two_path(&quad()).unwrap();
    let (up, _) = apscast::experiments::synthesize_pair(&rho, &p.no_si.fs, &quad()).unwrap();
    // the support-informed estimate jumps at 0, so its trapezoid sum needs a finer grid
    for (points, est, tol) in [(FIG3_POINTS, false, 1e-4), (2048, true, 1e-4)] {
        let f = run_fig3(p, &rho, points).unwrap();
        let curve = if est { &f.rho_est_si } else { &f.rho_est_no_si };
        let mut worst = 0.0f64;
        for (k, g) in p.no_si.fs.uplink.iter().enumerate() {
            let gk = GridFunction::sample(points, |t| g.evaluate(t)).unwrap();
            worst = worst.max((curve.inner_product(&gk).unwrap() - up.vector[k]).abs());
        }
        assert!(worst <= tol, "{points} points, support {est}: {worst}");
    }
    // not a density: the minimum-norm estimate dips below zero
    let f = run_fig3(p, &rho, FIG3_POINTS).unwrap();
    assert!(f.rho_est_no_si.values.iter().any(|v| *v < 0.0));
}

fn small_basis() -> Vec<AngularFunction> {
    build_function_set(&UlaConfig { n_antennas: 8, ..UlaConfig::table1() }, None).unwrap().uplink
}

#[test]
fn oracle_agrees_with_the_normal_equations() {
    let basis = small_basis();
    let g = gram_matrix(&basis, &quad()).unwrap();
    let p = pinv_psd(&g, &PinvSpec::default()).unwrap();
    let spec = OracleSpec::default();
    for y in [
        AngularFunction::cosine(3.7),
        AngularFunction::sine(11.2),
        AngularFunction::cosine(25.0),
        AngularFunction::sine(40.5).mask(&upper_half()).unwrap(),
    ] {
        let exact = projection_residual(&y, &basis, &p.matrix, &quad()).unwrap();
        let grid = oracle_residual(&y, &basis, &spec).unwrap();
        assert!((exact - grid).abs() <= 1e-4 * exact, "{y:?}: {exact} vs {grid}");
    }
}

#[test]
fn oracle_converges_under_grid_refinement() {
    let basis = small_basis();
    let y = AngularFunction::cosine(30.0);
    let coarse = oracle_residual(&y, &basis, &OracleSpec { grid_points: 2001 }).unwrap();
    let fine = oracle_residual(&y, &basis, &OracleSpec { grid_points: 4001 }).unwrap();
    assert!((coarse - fine).abs() < 1e-5, "{coarse} vs {fine}");
}

#[test]
fn perturbed_estimates_stay_in_the_ball() {
    let p = table1();
    let (report, perturbed) = sweep_generic_bound(p, p.with_support(), 3, 5).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert!(perturbed.iter().all(|e| e.norm <= p.config.b + 1e-12 && e.step != 0.0));
}
