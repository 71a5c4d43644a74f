//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input (arguments, config, files),
//! 2 when a numerical consistency check fails.

mod config;
mod operator;

pub use config::{ApsConfig, ArrayOverrides, Experiment, IoPaths, PinvOverrides, QuadOverrides, RunConfig};
pub use operator::{OperatorFile, OPERATOR_FORMAT};

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::conversion::{convert, CovarianceFile, HermitianToeplitzCov};
use crate::error::{Error, Result};
use crate::experiments::{
    run_fig1, run_fig2, run_fig3, sweep_generic_bound, sweep_min_norm_bound, Metadata, Pipeline, Regime,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "APSCAST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "apscast", version, about = "Uplink-to-downlink covariance conversion with per-entry error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct Common {
    /// JSON run configuration; defaults to the 30-antenna reference setup.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Support interval [A, B] in radians; repeat for a union of intervals.
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = ArgAction::Append, allow_negative_numbers = true)]
    support: Vec<f64>,
    /// Ignore any support set given in the config.
    #[arg(long, conflicts_with = "support")]
    no_support: bool,
    /// Bound on the spectrum norm.
    #[arg(short = 'B', long = "norm-bound", value_name = "B")]
    b: Option<f64>,
    /// Relative eigenvalue cutoff of the Gram pseudo-inverse.
    #[arg(long)]
    rel_cutoff: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-entry residuals and bounds as CSV.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Write `k,bound_no_si,bound_si` instead of the full report.
        #[arg(long)]
        compare: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bounds with and without support information (fig1.csv + fig1.json).
    Fig1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Realized conversion errors for one spectrum (fig2.csv + fig2.json).
    Fig2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// True and estimated spectra on a grid (fig3.csv + fig3.json).
    Fig3 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Checks both bounds over seeded random spectra (sweep.json).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Converts an uplink covariance file to a downlink covariance file.
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        input: Option<PathBuf>,
        /// Use an exported operator instead of building one.
        #[arg(long)]
        operator: Option<PathBuf>,
        /// Add the smallest diagonal shift that makes the output positive semidefinite.
        #[arg(long)]
        psd_repair: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Writes A, G and Q as JSON.
    ExportOperator {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs the experiment named in the config file.
    Run {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
}

impl Common {
    fn resolve(&self, exp: Experiment) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(e) = cfg.experiment {
            if e != exp {
                return Err(Error::Validation(format!(
                    "config names experiment {:?} but the command is {:?}",
                    e.name(),
                    exp.name()
                )));
            }
        }
        if !self.support.is_empty() {
            cfg.support = Some(self.support.chunks(2).map(|c| [c[0], c[1]]).collect());
        }
        if self.no_support {
            cfg.support = None;
        }
        if self.b.is_some() {
            cfg.b = self.b;
        }
        if self.rel_cutoff.is_some() {
            cfg.pinv.rel_cutoff = self.rel_cutoff;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status. Diagnostics go to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("apscast: {e}");
            exit_code(&e)
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Validation(format!("cannot start worker threads: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    let (exp, cfg) = match cli.command {
        Command::Bounds { common, compare, output } => {
            let mut cfg = common.resolve(Experiment::Bounds)?;
            set(&mut cfg.io.output, output);
            return thread_pool()?.install(|| run_bounds(&cfg, compare));
        }
        Command::Fig1 { common, out_dir } => {
            let mut cfg = common.resolve(Experiment::Fig1)?;
            set(&mut cfg.io.out_dir, out_dir);
            (Experiment::Fig1, cfg)
        }
        Command::Fig2 { common, out_dir } => {
            let mut cfg = common.resolve(Experiment::Fig2)?;
            set(&mut cfg.io.out_dir, out_dir);
            (Experiment::Fig2, cfg)
        }
        Command::Fig3 { common, out_dir, points } => {
            let mut cfg = common.resolve(Experiment::Fig3)?;
            set(&mut cfg.io.out_dir, out_dir);
            set(&mut cfg.grid_points, points);
            (Experiment::Fig3, cfg)
        }
        Command::Sweep { common, out_dir, draws } => {
            let mut cfg = common.resolve(Experiment::Sweep)?;
            set(&mut cfg.io.out_dir, out_dir);
            set(&mut cfg.draws, draws);
            (Experiment::Sweep, cfg)
        }
        Command::Convert { common, input, operator, psd_repair, output } => {
            let mut cfg = common.resolve(Experiment::Convert)?;
            cfg.psd_repair |= psd_repair;
            set(&mut cfg.io.input, input);
            set(&mut cfg.io.operator, operator);
            set(&mut cfg.io.output, output);
            (Experiment::Convert, cfg)
        }
        Command::ExportOperator { common, output } => {
            let mut cfg = common.resolve(Experiment::ExportOperator)?;
            set(&mut cfg.io.output, output);
            (Experiment::ExportOperator, cfg)
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let exp = cfg
                .experiment
                .ok_or_else(|| Error::Validation(format!("{}: `run` needs an \"experiment\" key", config.display())))?;
            (exp, cfg)
        }
    };
    thread_pool()?.install(|| dispatch(exp, &cfg))
}

/// Runs one experiment with a resolved configuration.
pub fn dispatch(exp: Experiment, cfg: &RunConfig) -> Result<()> {
    match exp {
        Experiment::Bounds => run_bounds(cfg, false),
        Experiment::Fig1 => run_figure(cfg, "fig1"),
        Experiment::Fig2 => run_figure(cfg, "fig2"),
        Experiment::Fig3 => run_figure(cfg, "fig3"),
        Experiment::Sweep => run_sweep(cfg),
        Experiment::Convert => run_convert(cfg),
        Experiment::ExportOperator => run_export(cfg),
    }
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Validation(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.io.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Validation(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {what} {}: {e}", path.display())))
}

fn single_regime(cfg: &RunConfig) -> Result<Regime> {
    let p = cfg.pipeline()?;
    Regime::build(&p, p.support.as_ref())
}

fn run_bounds(cfg: &RunConfig, compare: bool) -> Result<()> {
    let csv = if compare {
        run_fig1(&Pipeline::build(&cfg.pipeline()?)?)?.to_csv()
    } else {
        single_regime(cfg)?.bounds.to_csv()
    };
    emit(cfg.io.output.as_deref(), &csv)
}

fn run_figure(cfg: &RunConfig, figure: &str) -> Result<()> {
    let pc = cfg.pipeline()?;
    let p = Pipeline::build(&pc)?;
    let mut meta = Metadata::new(figure, &p);
    meta.seed = cfg.seed;
    let csv = match figure {
        "fig1" => {
            let f = run_fig1(&p)?;
            meta.summary = serde_json::json!({
                "max_bound_no_si": f.comparison.max_bound_no_si,
                "max_bound_si": f.comparison.max_bound_si,
            });
            f.to_csv()
        }
        "fig2" => {
            let aps = cfg.aps(&pc)?;
            let f = run_fig2(&p, &aps)?;
            meta.summary = serde_json::json!({
                "max_err_no_si": f.max_err_no_si,
                "max_err_si": f.max_err_si,
                "max_excess_si": f.max_excess_si,
                "norm_outside": f.norm_outside,
                "leakage_allowance": f.leakage_allowance,
                "uplink_fit": f.uplink_fit,
                "constraint_fit": f.constraint_fit,
            });
            meta.aps = Some(aps);
            f.to_csv()
        }
        _ => {
            let aps = cfg.aps(&pc)?;
            let points = cfg.grid_points();
            let f = run_fig3(&p, &aps, points)?;
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            meta.summary = serde_json::json!({
                "min_rho_est_no_si": min(&f.rho_est_no_si.values),
                "min_rho_est_si": min(&f.rho_est_si.values),
            });
            meta.grid_points = Some(points);
            meta.aps = Some(aps);
            f.to_csv()
        }
    };
    let dir = out_dir(cfg)?;
    emit(Some(&dir.join(format!("{figure}.csv"))), &csv)?;
    emit(Some(&dir.join(format!("{figure}.json"))), &(meta.to_json()? + "\n"))
}

/// Default number of random spectra per sweep.
pub const DEFAULT_DRAWS: usize = 50;

fn run_sweep(cfg: &RunConfig) -> Result<()> {
    let p = Pipeline::build(&cfg.pipeline()?)?;
    let seed = cfg.seed.unwrap_or(0);
    let draws = cfg.draws.unwrap_or(DEFAULT_DRAWS);
    if draws == 0 {
        return Err(Error::Validation("draws must be positive".into()));
    }
    let mut summary = serde_json::Map::new();
    let mut violations = 0;
    let regimes = [("no_si", Some(&p.no_si)), ("si", p.si.as_ref())];
    for (name, regime) in regimes {
        let Some(regime) = regime else { continue };
        let pv0 = sweep_min_norm_bound(&p, regime, seed, draws)?;
        let (generic, _) = sweep_generic_bound(&p, regime, seed, draws)?;
        violations += pv0.violations.len() + generic.violations.len();
        summary.insert(format!("min_norm_{name}"), serde_json::to_value(&pv0).unwrap_or_default());
        summary.insert(format!("generic_{name}"), serde_json::to_value(&generic).unwrap_or_default());
    }
    let mut meta = Metadata::new("sweep", &p);
    meta.seed = Some(seed);
    meta.summary = serde_json::Value::Object(summary);
    let dir = out_dir(cfg)?;
    emit(Some(&dir.join("sweep.json")), &(meta.to_json()? + "\n"))?;
    if violations > 0 {
        return Err(Error::Numerical(format!("{violations} realized errors exceed their bounds; see sweep.json")));
    }
    Ok(())
}

fn run_convert(cfg: &RunConfig) -> Result<()> {
    let input = cfg.io.input.as_deref().ok_or_else(|| Error::Validation("convert needs --input".into()))?;
    let origin = input.display().to_string();
    let cov: HermitianToeplitzCov = serde_json::from_str::<CovarianceFile>(&read(input, "covariance")?)
        .map_err(|e| Error::Validation(format!("{origin}: {e}")))?
        .try_into()?;
    let op = match &cfg.io.operator {
        Some(path) => OperatorFile::from_json(&read(path, "operator")?, &path.display().to_string())?.to_operator()?,
        None => single_regime(cfg)?.op,
    };
    if cov.n() != op.n {
        return Err(Error::Validation(format!(
            "{origin}: covariance has n = {} but the operator is for n = {}",
            cov.n(),
            op.n
        )));
    }
    let mut out = convert(&op, &cov)?;
    if cfg.psd_repair {
        let (fixed, shift) = out.repair_psd();
        if shift > 0.0 {
            eprintln!("apscast: added {shift:e} to the diagonal to restore positive semidefiniteness");
        }
        out = fixed;
    }
    let out = CovarianceFile::from(out);
    let text = serde_json::to_string_pretty(&out).map_err(|e| Error::Numerical(e.to_string()))?;
    emit(cfg.io.output.as_deref(), &(text + "\n"))
}

fn run_export(cfg: &RunConfig) -> Result<()> {
    let file = OperatorFile::from_regime(&single_regime(cfg)?);
    emit(cfg.io.output.as_deref(), &(file.to_json()? + "\n"))
}
