//! JSON run configuration. Every field is optional and defaults to the
//! reference 30-antenna experiment; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_model::UlaConfig;
use crate::error::{Error, Result};
use crate::experiments::{ApsModel, Normalization, Peak, PipelineConfig, FIG3_POINTS};
use crate::hilbert::SupportSet;
use crate::numerics::{PinvSpec, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bounds,
    Fig1,
    Fig2,
    Fig3,
    Sweep,
    Convert,
    ExportOperator,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Bounds => "bounds",
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Sweep => "sweep",
            Experiment::Convert => "convert",
            Experiment::ExportOperator => "export-operator",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayOverrides {
    pub n_antennas: Option<usize>,
    pub spacing: Option<f64>,
    pub f_up: Option<f64>,
    pub f_down: Option<f64>,
    pub wave_speed: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadOverrides {
    pub panel_order: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinvOverrides {
    pub rel_cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApsConfig {
    pub peaks: Vec<Peak>,
    #[serde(default = "unit_norm")]
    pub normalization: Normalization,
    /// Zero the spectrum outside the support set (and renormalize).
    #[serde(default)]
    pub truncate_to_support: bool,
}

fn unit_norm() -> Normalization {
    Normalization::UnitNorm
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoPaths {
    pub input: Option<PathBuf>,
    pub operator: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub array: ArrayOverrides,
    /// Interval pairs `[a, b]`; absent or null means no support information.
    #[serde(default)]
    pub support: Option<Vec<[f64; 2]>>,
    #[serde(rename = "B", default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub quad: QuadOverrides,
    #[serde(default)]
    pub pinv: PinvOverrides,
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    /// Plotting nodes for fig3.
    pub grid_points: Option<usize>,
    /// Number of random spectra per sweep.
    pub draws: Option<usize>,
    /// Shift converted covariances to be positive semidefinite.
    #[serde(default)]
    pub psd_repair: bool,
    /// Spectrum for fig2/fig3; the two-path example when absent.
    pub aps: Option<ApsConfig>,
    #[serde(default)]
    pub io: IoPaths,
}

impl RunConfig {
    /// Parses a config document. Errors carry the line and column of the problem.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn array(&self) -> UlaConfig {
        let d = UlaConfig::table1();
        let a = &self.array;
        UlaConfig {
            n_antennas: a.n_antennas.unwrap_or(d.n_antennas),
            spacing: a.spacing.unwrap_or(d.spacing),
            f_up: a.f_up.unwrap_or(d.f_up),
            f_down: a.f_down.unwrap_or(d.f_down),
            wave_speed: a.wave_speed.unwrap_or(d.wave_speed),
        }
    }

    pub fn support_set(&self) -> Result<Option<SupportSet>> {
        self.support.clone().map(SupportSet::try_from).transpose()
    }

    /// The fully resolved pipeline parameters, validated.
    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let q = QuadratureSpec::default();
        let quad = QuadratureSpec {
            panel_order: self.quad.panel_order.unwrap_or(q.panel_order),
            abs_tol: self.quad.abs_tol.unwrap_or(q.abs_tol),
            rel_tol: self.quad.rel_tol.unwrap_or(q.rel_tol),
            max_subdivisions: self.quad.max_subdivisions.unwrap_or(q.max_subdivisions),
        };
        let pinv = PinvSpec { rel_cutoff: self.pinv.rel_cutoff.unwrap_or(PinvSpec::default().rel_cutoff) };
        let cfg =
            PipelineConfig { array: self.array(), support: self.support_set()?, b: self.b.unwrap_or(1.0), quad, pinv };
        cfg.array.validate()?;
        cfg.quad.validate()?;
        cfg.pinv.validate()?;
        if !(cfg.b.is_finite() && cfg.b > 0.0) {
            return Err(Error::Validation(format!("B must be finite and positive, got {}", cfg.b)));
        }
        if cfg.support.as_ref().is_some_and(SupportSet::is_empty) {
            return Err(Error::Validation("support set must not be empty".into()));
        }
        Ok(cfg)
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(FIG3_POINTS)
    }

    pub fn aps(&self, cfg: &PipelineConfig) -> Result<ApsModel> {
        let model = match &self.aps {
            None => ApsModel::two_path(&cfg.quad)?,
            Some(a) => ApsModel::new(a.peaks.clone(), a.normalization, None, &cfg.quad)?,
        };
        match (&self.aps, &cfg.support) {
            (Some(a), Some(s)) if a.truncate_to_support => model.truncated(s, &cfg.quad),
            (Some(a), None) if a.truncate_to_support => {
                Err(Error::Validation("aps.truncate_to_support needs a support set".into()))
            }
            _ => Ok(model),
        }
    }
}
