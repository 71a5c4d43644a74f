//! Per-entry error bounds for converted covariance entries.
//!
//! For every downlink kernel `g_k`, the distance `||g_k - P_M(g_k)||` to the
//! observation subspace multiplies any bound on the spectrum:
//!
//! * minimum-norm estimate: `e_k <= B * residual_k`;
//! * any estimate in the variety with norm at most `B`: `e_k <= 2 B * residual_k`.
//!
//! The residual is integrated from the explicit function `g_k - sum alpha_j x_j`.
//! The shorter form `sqrt(||g_k||^2 - q_k^T G+ q_k)` loses about `||E|| ||alpha||^2`
//! to cancellation (`E` the backward error of the eigensolver), which with support
//! constraints is ~1e-9 and hides every residual below ~3e-5. It is still computed
//! and must agree with the integrated value.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::array_model::{EntryKind, FunctionSet};
use crate::conversion::{downlink_coefficients, downlink_cross_matrix, GramSystem};
use crate::error::{Error, Result};
use crate::hilbert::{combination_residual, inner_product};

/// Slack for `residual_k <= ||g_k||` and for support monotonicity.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Allowed gap between the two residual forms, relative to `max(1, ||g_k||^2)`.
pub const RADICAND_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryBound {
    /// 1-based slot index.
    pub k: usize,
    pub kind: EntryKindLabel,
    /// Toeplitz lag of the entry.
    pub lag: usize,
    pub residual: f64,
    /// `sqrt(max(0, ||g_k||^2 - q_k^T G+ q_k))`, for diagnostics only.
    #[serde(skip)]
    pub residual_gram: f64,
    pub bound_generic: f64,
    pub bound_pv0: f64,
    pub norm_gdk_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKindLabel {
    Real,
    Imag,
}

impl From<EntryKind> for EntryKindLabel {
    fn from(k: EntryKind) -> Self {
        match k {
            EntryKind::Real => EntryKindLabel::Real,
            EntryKind::Imag => EntryKindLabel::Imag,
        }
    }
}

impl EntryKindLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntryKindLabel::Real => "real",
            EntryKindLabel::Imag => "imag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub per_k: Vec<EntryBound>,
    #[serde(rename = "B")]
    pub b: f64,
    pub config_hash: String,
}

impl BoundReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.per_k.iter().map(|e| e.residual).collect()
    }

    pub fn max_bound_pv0(&self) -> f64 {
        self.per_k.iter().map(|e| e.bound_pv0).fold(0.0, f64::max)
    }

    /// Same residuals under a different spectrum-norm bound.
    pub fn rescaled(&self, b: f64) -> Result<BoundReport> {
        check_b(b)?;
        let per_k = self
            .per_k
            .iter()
            .map(|e| EntryBound { bound_pv0: b * e.residual, bound_generic: 2.0 * b * e.residual, ..e.clone() })
            .collect();
        Ok(BoundReport { per_k, b, config_hash: self.config_hash.clone() })
    }

    /// `k,entry_kind,lag,residual,bound_generic,bound_pv0,norm_gdk_sq`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,entry_kind,lag,residual,bound_generic,bound_pv0,norm_gdk_sq\n");
        for e in &self.per_k {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:e}",
                e.k,
                e.kind.as_str(),
                e.lag,
                e.residual,
                e.bound_generic,
                e.bound_pv0,
                e.norm_gdk_sq
            );
        }
        s
    }
}

fn check_b(b: f64) -> Result<()> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Validation(format!("spectrum norm bound B must be positive, got {b}")));
    }
    Ok(())
}

/// Residuals and both bounds for every downlink slot.
pub fn compute_bounds(gs: &GramSystem, fs: &FunctionSet, b: f64) -> Result<BoundReport> {
    check_b(b)?;
    let q = downlink_cross_matrix(gs, fs)?;
    let norms =
        fs.downlink.iter().map(|g| inner_product(g, g, &gs.quad).map(|v| v.value)).collect::<Result<Vec<_>>>()?;
    bounds_from_parts(gs, fs, &q, &norms, b)
}

/// As [`compute_bounds`], reusing an already assembled `Q` and downlink norms.
pub fn bounds_from_parts(
    gs: &GramSystem,
    fs: &FunctionSet,
    q: &DMatrix<f64>,
    norms_sq: &[f64],
    b: f64,
) -> Result<BoundReport> {
    check_b(b)?;
    if q.nrows() != gs.len() || q.ncols() != norms_sq.len() {
        return Err(Error::Contract("Q matrix does not match the Gram system".into()));
    }
    let conv = fs.index_convention;
    let coeffs = downlink_coefficients(gs, fs, q);
    let basis = &gs.basis;
    let direct = (0..norms_sq.len())
        .into_par_iter()
        .map(|k| {
            let alpha: DVector<f64> = coeffs.column(k).into_owned();
            combination_residual(&fs.downlink[k], basis, &alpha, &gs.quad).map(|v| v.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_k = Vec::with_capacity(norms_sq.len());
    for (k, &norm_sq) in norms_sq.iter().enumerate() {
        let qk: DVector<f64> = q.column(k).into_owned();
        let radicand = norm_sq - qk.dot(&gs.apply_pinv(&qk));
        let residual = direct[k];
        if (radicand - residual * residual).abs() > RADICAND_TOL * norm_sq.max(1.0) {
            return Err(Error::Numerical(format!(
                "slot {}: residual^2 {:e} disagrees with ||g||^2 - q^T G+ q = {:e}; \
                 the pseudo-inverse cutoff is likely too small",
                k + 1,
                residual * residual,
                radicand
            )));
        }
        if residual > norm_sq.max(0.0).sqrt() + CONSISTENCY_TOL {
            return Err(Error::Numerical(format!(
                "residual {residual:e} of slot {} exceeds the kernel norm {:e}",
                k + 1,
                norm_sq.sqrt()
            )));
        }
        let (kind, lag) = conv.describe(k);
        per_k.push(EntryBound {
            k: k + 1,
            kind: kind.into(),
            lag,
            residual,
            residual_gram: radicand.max(0.0).sqrt(),
            bound_generic: 2.0 * b * residual,
            bound_pv0: b * residual,
            norm_gdk_sq: norm_sq,
        });
    }
    Ok(BoundReport { per_k, b, config_hash: config_hash(gs, fs) })
}

/// Stable FNV-1a digest of everything the bounds depend on.
pub fn config_hash(gs: &GramSystem, fs: &FunctionSet) -> String {
    let desc = serde_json::json!({
        "config": fs.config,
        "support": fs.support,
        "constraints": fs.constraints.len(),
        "quad": gs.quad,
        "pinv": gs.pinv_spec,
    });
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in desc.to_string().bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Per-slot change from adding support information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundDelta {
    pub k: usize,
    pub residual_no_si: f64,
    pub residual_si: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparison {
    pub rows: Vec<BoundDelta>,
    pub max_bound_no_si: f64,
    pub max_bound_si: f64,
}

/// Compares two reports over the same array and `B`. A residual that grows by
/// more than `1e-9` when constraints are added contradicts subspace
/// monotonicity and is reported as [`Error::Numerical`].
pub fn bound_tightened_by_support(no_si: &BoundReport, si: &BoundReport) -> Result<BoundComparison> {
    if no_si.per_k.len() != si.per_k.len() {
        return Err(Error::Contract("reports cover different numbers of entries".into()));
    }
    if no_si.b != si.b {
        return Err(Error::Contract(format!("reports use different B ({} vs {})", no_si.b, si.b)));
    }
    let mut rows = Vec::with_capacity(si.per_k.len());
    for (a, b) in no_si.per_k.iter().zip(&si.per_k) {
        if b.residual > a.residual + CONSISTENCY_TOL {
            return Err(Error::Numerical(format!(
                "support information increased the residual of slot {} from {:e} to {:e}; the pseudo-inverse cutoff is likely too aggressive",
                a.k, a.residual, b.residual
            )));
        }
        rows.push(BoundDelta {
            k: a.k,
            residual_no_si: a.residual,
            residual_si: b.residual,
            delta: b.residual - a.residual,
        });
    }
    Ok(BoundComparison { rows, max_bound_no_si: no_si.max_bound_pv0(), max_bound_si: si.max_bound_pv0() })
}
