//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Golden values for the support comparison live in `tests/golden/`; set
//! `APSCAST_BLESS=1` to rewrite them after a verified change.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use apscast::array_model::{build_function_set, UlaConfig};
use apscast::experiments::{
    run_fig1, run_fig2, run_fig3, sweep_generic_bound, sweep_min_norm_bound, synthesize_pair, ApsModel, MixtureSampler,
    OracleProjector, OracleSpec, Pipeline, PipelineConfig, Regime, FIG3_POINTS,
};
use apscast::hilbert::{closed_form_inner_product, quadrature_inner_product, SupportSet};
use apscast::{convert, QuadratureSpec};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn upper_half() -> SupportSet {
    SupportSet::new([(0.0, FRAC_PI_2)]).unwrap()
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_forms() -> Outcome {
    let t = Instant::now();
    let cfg = UlaConfig { n_antennas: 8, ..UlaConfig::table1() };
    let fs = build_function_set(&cfg, Some(&upper_half())).map_err(|e| e.to_string())?;
    let basis = fs.basis();
    let mut worst = 0.0f64;
    let mut count = 0;
    let targets = basis.iter().chain(&fs.downlink);
    for (j, x) in basis.iter().enumerate() {
        for y in targets.clone().skip(j) {
            let Some(exact) = closed_form_inner_product(x, y) else { continue };
            let numeric = quadrature_inner_product(x, y, &quad()).map_err(|e| e.to_string())?.value;
            worst = worst.max((exact - numeric).abs());
            count += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-8 && secs < 5.0, format!("{count} unmasked Gram/Q entries, max |diff| {worst:.2e}, {secs:.2} s"))
}

fn oracle_equivalence(p: &Pipeline) -> Outcome {
    let t = Instant::now();
    let spec = OracleSpec::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, regime) in [("no SI", &p.no_si), ("SI", p.with_support())] {
        let gs = &regime.gs;
        let proj = OracleProjector::with_leading(&gs.basis, gs.n_uplink, &regime.fs.downlink, &spec, &gs.pinv_spec)
            .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for (k, g) in regime.fs.downlink.iter().enumerate() {
            let e = &regime.bounds.per_k[k];
            let scale = e.norm_gdk_sq.sqrt();
            if scale == 0.0 {
                continue;
            }
            worst = worst.max((e.residual_gram - proj.residual(g)).abs() / scale);
        }
        ok &= worst <= 1e-4;
        parts.push(format!("{name} {worst:.2e}"));
    }
    let secs = t.elapsed().as_secs_f64();
    check(ok && secs < 60.0, format!("max |res - oracle| / ||g_k|| at 4001 points: {}, {secs:.1} s", parts.join(", ")))
}

fn min_norm_sweep(p: &Pipeline) -> Outcome {
    let mut parts = Vec::new();
    let mut violations = 0;
    for (name, regime) in [("no SI", &p.no_si), ("SI", p.with_support())] {
        let r = sweep_min_norm_bound(p, regime, 1, 50).map_err(|e| e.to_string())?;
        violations += r.violations.len();
        parts.push(format!("{name} worst err - bound {:.2e}", r.worst_excess));
    }
    check(
        violations == 0,
        format!("50 spectra x 60 entries x 2 operators, {violations} violations ({})", parts.join(", ")),
    )
}

fn generic_sweep(p: &Pipeline) -> Outcome {
    let mut parts = Vec::new();
    let mut violations = 0;
    let mut max_norm = 0.0f64;
    for (name, regime) in [("no SI", &p.no_si), ("SI", p.with_support())] {
        let (r, est) = sweep_generic_bound(p, regime, 2, 20).map_err(|e| e.to_string())?;
        violations += r.violations.len();
        max_norm = est.iter().map(|e| e.norm).fold(max_norm, f64::max);
        parts.push(format!("{name} worst err - bound {:.2e}", r.worst_excess));
    }
    check(
        violations == 0 && max_norm <= 1.0 + 1e-12,
        format!(
            "20 perturbed estimates per operator, max norm {max_norm:.6}, {violations} violations ({})",
            parts.join(", ")
        ),
    )
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fig1.csv")
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect()).collect()
}

fn monotonicity(p: &Pipeline) -> Outcome {
    let f = run_fig1(p).map_err(|e| e.to_string())?;
    let worst_increase = f.comparison.rows.iter().map(|r| r.delta).fold(f64::NEG_INFINITY, f64::max);
    let structural = worst_increase <= 1e-9 && f.comparison.max_bound_si < f.comparison.max_bound_no_si;
    let detail = format!(
        "max increase {worst_increase:.2e}, max bound {:.4} -> {:.4}",
        f.comparison.max_bound_no_si, f.comparison.max_bound_si
    );
    if !structural {
        return Err(detail);
    }
    let csv = f.to_csv();
    let path = golden_path();
    if std::env::var_os("APSCAST_BLESS").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
        return Ok(format!("{detail}, golden file recorded"));
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let (got, want) = (parse_csv(&csv), parse_csv(&golden));
    if got.len() != want.len() || got.iter().zip(&want).any(|(a, b)| a.len() != b.len()) {
        return Err(format!("{detail}, golden file has a different shape"));
    }
    let diff = got.iter().flatten().zip(want.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(diff <= 1e-9, format!("{detail}, max |diff| to golden {diff:.2e}"))
}

fn exact_entries(p: &Pipeline) -> Outcome {
    let reciprocal = PipelineConfig {
        array: UlaConfig { f_down: UlaConfig::table1().f_up, ..UlaConfig::table1() },
        ..PipelineConfig::table1(Some(upper_half()))
    };
    let small = PipelineConfig {
        array: UlaConfig { n_antennas: 8, ..UlaConfig::table1() },
        ..PipelineConfig::table1(Some(upper_half()))
    };
    let extra = [Pipeline::build(&reciprocal), Pipeline::build(&small)];
    let mut pipelines = vec![p];
    for e in &extra {
        pipelines.push(e.as_ref().map_err(|e| e.to_string())?);
    }
    let mut worst = 0.0f64;
    let mut configs = 0;
    for pl in pipelines {
        for regime in [&pl.no_si, pl.with_support()] {
            configs += 1;
            let n = regime.op.n;
            let mut sampler = MixtureSampler::new(7, &upper_half(), &quad()).map_err(|e| e.to_string())?;
            let mut spectra = vec![ApsModel::two_path(&quad()).map_err(|e| e.to_string())?];
            for _ in 0..5 {
                spectra.push(sampler.draw().map_err(|e| e.to_string())?);
            }
            for k in [0, n] {
                worst = worst.max(regime.bounds.per_k[k].bound_pv0).max(regime.bounds.per_k[k].bound_generic);
            }
            for rho in &spectra {
                let (up, down) = synthesize_pair(rho, &regime.fs, &quad()).map_err(|e| e.to_string())?;
                let errs = regime.realized_errors(&up.vector, &down.vector).map_err(|e| e.to_string())?;
                worst = worst.max(errs[0]).max(errs[n]);
            }
        }
    }
    check(worst <= 1e-9, format!("k = 1 and k = N+1 over {configs} operators: max bound or error {worst:.2e}"))
}

fn reciprocity() -> Outcome {
    let cfg = PipelineConfig {
        array: UlaConfig { f_down: UlaConfig::table1().f_up, ..UlaConfig::table1() },
        ..PipelineConfig::table1(None)
    };
    let regime = Regime::build(&cfg, None).map_err(|e| e.to_string())?;
    let mut sampler = MixtureSampler::new(11, &SupportSet::full(), &quad()).map_err(|e| e.to_string())?;
    let mut spectra = vec![ApsModel::two_path(&quad()).map_err(|e| e.to_string())?];
    for _ in 0..10 {
        spectra.push(sampler.draw().map_err(|e| e.to_string())?);
    }
    let mut worst = 0.0f64;
    for rho in &spectra {
        let (up, _) = synthesize_pair(rho, &regime.fs, &quad()).map_err(|e| e.to_string())?;
        let out = convert(&regime.op, &up.cov).map_err(|e| e.to_string())?;
        for (a, b) in out.first_col().iter().zip(up.cov.first_col()) {
            worst = worst.max((a - b).norm());
        }
    }
    check(worst <= 1e-6, format!("f_up = f_down, {} spectra: max |R_d - R_u| {worst:.2e}", spectra.len()))
}

fn figures() -> Outcome {
    let t = Instant::now();
    let p = Pipeline::build(&PipelineConfig::table1(Some(upper_half()))).map_err(|e| e.to_string())?;
    let rho = ApsModel::two_path(&quad()).map_err(|e| e.to_string())?;
    run_fig1(&p).map_err(|e| e.to_string())?;
    let f2 = run_fig2(&p, &rho).map_err(|e| e.to_string())?;
    let f3 = run_fig3(&p, &rho, FIG3_POINTS).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();

    let dir = std::env::temp_dir().join(format!("apscast-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("fig2.csv"), f2.to_csv()).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("fig3.csv"), f3.to_csv()).map_err(|e| e.to_string())?;
    let written = ["fig2.csv", "fig3.csv"].iter().all(|f| dir.join(f).metadata().is_ok_and(|m| m.len() > 0));
    let _ = std::fs::remove_dir_all(&dir);

    // membership in the variety, checked with fresh inner products
    let mut fit = 0.0f64;
    for (est, regime) in [(&f2.estimate_no_si, &p.no_si), (&f2.estimate_si, p.with_support())] {
        for (k, g) in regime.fs.uplink.iter().enumerate() {
            fit = fit.max((est.inner_product(g, &quad()).map_err(|e| e.to_string())? - f2.r_u[k]).abs());
        }
    }
    check(
        written && f2.max_err_si < f2.max_err_no_si && fit <= 1e-6 && secs < 60.0,
        format!(
            "max error {:.3e} without SI, {:.3e} with SI; uplink fit {fit:.1e}; pipeline {secs:.2} s",
            f2.max_err_no_si, f2.max_err_si
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.json");
    let mut runs = Vec::new();
    for i in 0..2 {
        let out = format!("run{i}");
        let mut files = Vec::new();
        for fig in ["fig1", "fig2", "fig3"] {
            let status = Command::new(env!("CARGO_BIN_EXE_apscast"))
                .args([fig, "--config", config.to_str().unwrap(), "--out-dir", &out])
                .current_dir(dir.path())
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("apscast {fig} exited with {status}"));
            }
            files.push(std::fs::read(dir.path().join(&out).join(format!("{fig}.csv"))).map_err(|e| e.to_string())?);
        }
        runs.push(files);
    }
    check(runs[0] == runs[1], format!("fig1-3 CSVs from two runs identical: {}", runs[0] == runs[1]))
}

fn main() {
    let t = Instant::now();
    let pipeline = Pipeline::build(&PipelineConfig::table1(Some(upper_half())));
    let pipeline = match pipeline {
        Ok(p) => p,
        Err(e) => {
            println!("acceptance: reference pipeline failed to build: {e}");
            std::process::exit(1);
        }
    };
    let p = &pipeline;
    let criteria: Vec<Criterion> = vec![
        ("closed forms vs quadrature", Box::new(closed_forms)),
        ("residuals vs grid oracle", Box::new(|| oracle_equivalence(p))),
        ("minimum-norm bound sweep", Box::new(|| min_norm_sweep(p))),
        ("generic bound sweep", Box::new(|| generic_sweep(p))),
        ("support monotonicity", Box::new(|| monotonicity(p))),
        ("exact entries", Box::new(|| exact_entries(p))),
        ("reciprocity", Box::new(reciprocity)),
        ("figure reproduction", Box::new(figures)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag}: {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} of {} passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        t.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
