//! Synthetic spectra, realized conversion errors and the three figure datasets.
//!
//! A [`Pipeline`] builds the operator and bounds once without support
//! information and once with it; every runner reads from it.

mod aps;
mod oracle;

pub use aps::{ApsModel, MixtureSampler, Normalization, Peak};
pub use oracle::{oracle_residual, OracleProjector, OracleSpec};

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::array_model::{build_function_set, FunctionSet, Link, UlaConfig};
use crate::bounds::{bound_tightened_by_support, bounds_from_parts, BoundComparison, BoundReport};
use crate::conversion::{
    build_conversion_operator, build_gram_system, estimate_aps, projection_alpha, ApsEstimate, ConversionOperator,
    GramSystem, HermitianToeplitzCov,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    basis_inner_products, combination_residual, density_inner_product, AngularFunction, GridFunction, SupportSet,
};
use crate::numerics::{PinvSpec, QuadratureSpec};

/// Slack added to every bound before a realized error counts as a violation.
pub const BOUND_SLACK: f64 = 1e-7;

/// Everything a pipeline depends on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub array: UlaConfig,
    pub support: Option<SupportSet>,
    #[serde(rename = "B")]
    pub b: f64,
    pub quad: QuadratureSpec,
    pub pinv: PinvSpec,
}

impl PipelineConfig {
    pub fn table1(support: Option<SupportSet>) -> Self {
        Self { array: UlaConfig::table1(), support, b: 1.0, quad: QuadratureSpec::default(), pinv: PinvSpec::default() }
    }
}

/// Operator and bounds for one constraint set.
#[derive(Debug, Clone)]
pub struct Regime {
    pub fs: FunctionSet,
    pub gs: GramSystem,
    pub op: ConversionOperator,
    pub bounds: BoundReport,
}

impl Regime {
    pub fn build(cfg: &PipelineConfig, support: Option<&SupportSet>) -> Result<Self> {
        let fs = build_function_set(&cfg.array, support)?;
        let gs = build_gram_system(&fs, &cfg.quad, &cfg.pinv)?;
        let op = build_conversion_operator(&gs, &fs)?;
        let bounds = bounds_from_parts(&gs, &fs, &op.q, &op.downlink_norms_sq, cfg.b)?;
        Ok(Self { fs, gs, op, bounds })
    }

    /// `|A r_u - r_d|` per slot.
    pub fn realized_errors(&self, r_u: &DVector<f64>, r_d: &DVector<f64>) -> Result<Vec<f64>> {
        let est = self.op.apply(r_u)?;
        Ok(est.iter().zip(r_d.iter()).map(|(a, b)| (a - b).abs()).collect())
    }

    pub fn estimate(&self, r_u: &DVector<f64>) -> Result<ApsEstimate> {
        estimate_aps(&self.gs, r_u)
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub no_si: Regime,
    /// `None` when no support set was given.
    pub si: Option<Regime>,
}

impl Pipeline {
    pub fn build(config: &PipelineConfig) -> Result<Self> {
        let no_si = Regime::build(config, None)?;
        let si = match &config.support {
            Some(s) => Some(Regime::build(config, Some(s))?),
            None => None,
        };
        Ok(Self { config: config.clone(), no_si, si })
    }

    /// The support-informed regime, or the plain one when there is no support set.
    pub fn with_support(&self) -> &Regime {
        self.si.as_ref().unwrap_or(&self.no_si)
    }

    fn sampling_support(&self) -> SupportSet {
        self.config.support.clone().unwrap_or_else(SupportSet::full)
    }
}

/// First-column covariance of a spectrum, plus the slots whose quadrature did
/// not converge.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub vector: DVector<f64>,
    pub cov: HermitianToeplitzCov,
    pub unconverged: Vec<usize>,
}

/// `r_k = <rho, g_k>` for the uplink or downlink kernels of `fs`.
pub fn synthesize_covariance(aps: &ApsModel, fs: &FunctionSet, link: Link, quad: &QuadratureSpec) -> Result<Synthesis> {
    let values = fs.link(link).par_iter().map(|g| density_inner_product(aps, g, quad)).collect::<Result<Vec<_>>>()?;
    let unconverged = values.iter().enumerate().filter(|(_, v)| !v.converged).map(|(k, _)| k).collect();
    let vector = DVector::from_iterator(values.len(), values.iter().map(|v| v.value));
    let cov = HermitianToeplitzCov::from_vector(&vector)?;
    Ok(Synthesis { vector, cov, unconverged })
}

/// Uplink and downlink vectors of one spectrum for one function set.
pub fn synthesize_pair(aps: &ApsModel, fs: &FunctionSet, quad: &QuadratureSpec) -> Result<(Synthesis, Synthesis)> {
    Ok((synthesize_covariance(aps, fs, Link::Uplink, quad)?, synthesize_covariance(aps, fs, Link::Downlink, quad)?))
}

fn fmt_row(s: &mut String, k: usize, values: &[f64]) {
    let _ = write!(s, "{k}");
    for v in values {
        let _ = write!(s, ",{v:e}");
    }
    s.push('\n');
}

/// Bounds with and without support information.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1 {
    pub no_si: BoundReport,
    pub si: BoundReport,
    pub comparison: BoundComparison,
}

impl Fig1 {
    /// `k,bound_no_si,bound_si`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,bound_no_si,bound_si\n");
        for (a, b) in self.no_si.per_k.iter().zip(&self.si.per_k) {
            fmt_row(&mut s, a.k, &[a.bound_pv0, b.bound_pv0]);
        }
        s
    }
}

pub fn run_fig1(p: &Pipeline) -> Result<Fig1> {
    let no_si = p.no_si.bounds.clone();
    let si = p.with_support().bounds.clone();
    let comparison = bound_tightened_by_support(&no_si, &si)?;
    Ok(Fig1 { no_si, si, comparison })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub k: usize,
    pub err_no_si: f64,
    pub err_si: f64,
    pub bound_no_si: f64,
    pub bound_si: f64,
}

/// Realized errors of one spectrum under both operators.
#[derive(Debug, Clone, Serialize)]
pub struct Fig2 {
    pub rows: Vec<Fig2Row>,
    pub max_err_no_si: f64,
    pub max_err_si: f64,
    /// `max_k (err_si - bound_si)`; positive only when the spectrum leaks out of the support set.
    pub max_excess_si: f64,
    /// `||rho||` outside the support set.
    pub norm_outside: f64,
    /// `2 B ||rho_outside|| max_k ||g_{d,k}||`, the allowance for that leakage.
    pub leakage_allowance: f64,
    /// `max_k |<rho~_si, g_{u,k}> - r_{u,k}|`.
    pub uplink_fit: f64,
    /// `max_j |<rho~_si, v_j>|`.
    pub constraint_fit: f64,
    #[serde(skip)]
    pub estimate_no_si: ApsEstimate,
    #[serde(skip)]
    pub estimate_si: ApsEstimate,
    #[serde(skip)]
    pub r_u: DVector<f64>,
}

impl Fig2 {
    /// `k,err_no_si,err_si,bound_si`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,err_no_si,err_si,bound_si\n");
        for r in &self.rows {
            fmt_row(&mut s, r.k, &[r.err_no_si, r.err_si, r.bound_si]);
        }
        s
    }
}

pub fn run_fig2(p: &Pipeline, aps: &ApsModel) -> Result<Fig2> {
    let quad = &p.config.quad;
    let (up, down) = synthesize_pair(aps, &p.no_si.fs, quad)?;
    let si = p.with_support();
    let err_no = p.no_si.realized_errors(&up.vector, &down.vector)?;
    let err_si = si.realized_errors(&up.vector, &down.vector)?;
    let rows: Vec<Fig2Row> = (0..err_no.len())
        .map(|k| Fig2Row {
            k: k + 1,
            err_no_si: err_no[k],
            err_si: err_si[k],
            bound_no_si: p.no_si.bounds.per_k[k].bound_pv0,
            bound_si: si.bounds.per_k[k].bound_pv0,
        })
        .collect();

    let estimate_no_si = p.no_si.estimate(&up.vector)?;
    let estimate_si = si.estimate(&up.vector)?;
    let observed = &si.gs.g * &estimate_si.alpha;
    let target = si.gs.padded(&up.vector)?;
    let n_up = si.gs.n_uplink;
    let fit = (observed - target).abs();
    let uplink_fit = fit.rows(0, n_up).max();
    let constraint_fit = if si.gs.len() > n_up { fit.rows(n_up, si.gs.len() - n_up).max() } else { 0.0 };

    let norm_outside = match &p.config.support {
        Some(s) => aps.norm_outside(s, quad)?,
        None => 0.0,
    };
    let max_g = si.op.downlink_norms_sq.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(Fig2 {
        max_err_no_si: max(&err_no),
        max_err_si: max(&err_si),
        max_excess_si: rows.iter().map(|r| r.err_si - r.bound_si).fold(f64::NEG_INFINITY, f64::max),
        norm_outside,
        leakage_allowance: 2.0 * p.config.b * norm_outside * max_g,
        uplink_fit,
        constraint_fit,
        rows,
        estimate_no_si,
        estimate_si,
        r_u: up.vector,
    })
}

/// Default number of plotting nodes.
pub const FIG3_POINTS: usize = 1024;

/// True and estimated spectra on a uniform grid.
#[derive(Debug, Clone)]
pub struct Fig3 {
    pub rho_true: GridFunction,
    pub rho_est_no_si: GridFunction,
    pub rho_est_si: GridFunction,
}

impl Fig3 {
    /// `theta,rho_true,rho_est_no_si,rho_est_si`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,rho_true,rho_est_no_si,rho_est_si\n");
        for i in 0..self.rho_true.nodes.len() {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e}",
                self.rho_true.nodes[i],
                self.rho_true.values[i],
                self.rho_est_no_si.values[i],
                self.rho_est_si.values[i]
            );
        }
        s
    }
}

pub fn run_fig3(p: &Pipeline, aps: &ApsModel, points: usize) -> Result<Fig3> {
    use crate::hilbert::AngularDensity;
    let (up, _) = synthesize_pair(aps, &p.no_si.fs, &p.config.quad)?;
    let no = p.no_si.estimate(&up.vector)?;
    let si = p.with_support().estimate(&up.vector)?;
    Ok(Fig3 {
        rho_true: GridFunction::sample(points, |t| aps.value(t))?,
        rho_est_no_si: GridFunction::sample(points, |t| no.evaluate(t))?,
        rho_est_si: GridFunction::sample(points, |t| si.evaluate(t))?,
    })
}

/// Outcome of checking realized errors against a bound over many spectra.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub draws: usize,
    /// `max (err - bound)` over draws and slots.
    pub worst_excess: f64,
    /// Pairs `(draw, slot)` with `err > bound + 1e-7`.
    pub violations: Vec<(usize, usize)>,
}

impl SweepReport {
    fn new() -> Self {
        Self { draws: 0, worst_excess: f64::NEG_INFINITY, violations: Vec::new() }
    }

    fn record(&mut self, draw: usize, errs: &[f64], bounds: &[f64]) {
        self.draws = self.draws.max(draw + 1);
        for (k, (e, b)) in errs.iter().zip(bounds).enumerate() {
            self.worst_excess = self.worst_excess.max(e - b);
            if *e > b + BOUND_SLACK {
                self.violations.push((draw, k + 1));
            }
        }
    }
}

/// Draws `count` unit-norm spectra inside the support set (seeded) and checks
/// `|A r_u - r_d| <= B residual_k` for the given regime.
pub fn sweep_min_norm_bound(p: &Pipeline, regime: &Regime, seed: u64, count: usize) -> Result<SweepReport> {
    let mut sampler = MixtureSampler::new(seed, &p.sampling_support(), &p.config.quad)?;
    let bounds: Vec<f64> = regime.bounds.per_k.iter().map(|e| e.bound_pv0).collect();
    let mut report = SweepReport::new();
    for draw in 0..count {
        let aps = sampler.draw()?;
        let (up, down) = synthesize_pair(&aps, &regime.fs, &p.config.quad)?;
        report.record(draw, &regime.realized_errors(&up.vector, &down.vector)?, &bounds);
    }
    Ok(report)
}

/// Perturbation directions with a smaller residual norm are redrawn.
const MIN_DIRECTION_NORM: f64 = 1e-2;

/// A member of the variety: `P_V(0) + s d` with `d = y - P_M(y)` orthogonal to
/// the observation subspace.
#[derive(Debug, Clone)]
pub struct PerturbedEstimate {
    pub direction: AngularFunction,
    /// Coefficients of `P_M(y)`.
    pub beta: DVector<f64>,
    pub direction_norm: f64,
    pub step: f64,
    /// `||P_V(0) + s d||`.
    pub norm: f64,
}

/// Checks `|<rho~, g_{d,k}> - r_{d,k}| <= 2 B residual_k` for `rho~` in the
/// variety with `||rho~|| <= B`. Each draw pairs a random spectrum with a random
/// kernel direction and a step that keeps the norm within `B`.
pub fn sweep_generic_bound(
    p: &Pipeline,
    regime: &Regime,
    seed: u64,
    count: usize,
) -> Result<(SweepReport, Vec<PerturbedEstimate>)> {
    let quad = &p.config.quad;
    let b = p.config.b;
    let mut sampler = MixtureSampler::new(seed, &p.sampling_support(), quad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let max_omega = regime.fs.downlink.iter().map(|g| g.omega).fold(1.0, f64::max);
    let bounds: Vec<f64> = regime.bounds.per_k.iter().map(|e| e.bound_generic).collect();
    let mut report = SweepReport::new();
    let mut perturbed = Vec::with_capacity(count);
    for draw in 0..count {
        let aps = sampler.draw()?;
        let (up, down) = synthesize_pair(&aps, &regime.fs, quad)?;
        let base = regime.estimate(&up.vector)?;

        // a kernel well outside the observed band, so that its residual
        // direction has a usable norm
        let (y, beta, d_norm) = loop {
            let omega = rng.gen_range(1.5 * max_omega..3.0 * max_omega);
            let y = if rng.gen_bool(0.5) { AngularFunction::cosine(omega) } else { AngularFunction::sine(omega) };
            let z = basis_inner_products(&regime.gs.basis, &y, quad)?;
            let beta = projection_alpha(&regime.gs, &y, &z);
            let d_norm = combination_residual(&y, &regime.gs.basis, &beta, quad)?.value;
            if d_norm >= MIN_DIRECTION_NORM {
                break (y, beta, d_norm);
            }
        };
        let room = (b * b - base.norm_sq).max(0.0).sqrt();
        let step = rng.gen_range(0.5..=1.0) * room / d_norm;
        let step = if rng.gen_bool(0.5) { step } else { -step };

        let est = regime.op.apply(&up.vector)?;
        let mut errs = Vec::with_capacity(est.len());
        for (k, g) in regime.fs.downlink.iter().enumerate() {
            let dg = crate::hilbert::inner_product(&y, g, quad)?.value - beta.dot(&regime.op.q.column(k));
            errs.push((est[k] + step * dg - down.vector[k]).abs());
        }
        report.record(draw, &errs, &bounds);
        perturbed.push(PerturbedEstimate {
            norm: (base.norm_sq + step * step * d_norm * d_norm).sqrt(),
            direction: y,
            beta,
            direction_norm: d_norm,
            step,
        });
    }
    Ok((report, perturbed))
}

/// JSON sidecar written next to every figure CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub figure: String,
    pub crate_version: String,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub seed: Option<u64>,
    pub rank_no_si: usize,
    pub rank_si: Option<usize>,
    pub gram_size_no_si: usize,
    pub gram_size_si: Option<usize>,
    pub unconverged_gram_entries: usize,
    pub residual_tolerance: f64,
    pub bound_slack: f64,
    pub grid_points: Option<usize>,
    pub aps: Option<ApsModel>,
    pub summary: serde_json::Value,
}

impl Metadata {
    pub fn new(figure: &str, p: &Pipeline) -> Self {
        Self {
            figure: figure.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            pipeline: p.config.clone(),
            seed: None,
            rank_no_si: p.no_si.gs.rank(),
            rank_si: p.si.as_ref().map(|r| r.gs.rank()),
            gram_size_no_si: p.no_si.gs.len(),
            gram_size_si: p.si.as_ref().map(|r| r.gs.len()),
            unconverged_gram_entries: p.no_si.gs.flagged.len() + p.si.as_ref().map_or(0, |r| r.gs.flagged.len()),
            residual_tolerance: crate::bounds::RADICAND_TOL,
            bound_slack: BOUND_SLACK,
            grid_points: None,
            aps: None,
            summary: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("metadata serialization failed: {e}")))
    }
}
