//! Moore-Penrose pseudo-inverse of symmetric positive semidefinite matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Schur eigenvalues below this multiple of the most negative one are noise.
const SCHUR_NOISE_FACTOR: f64 = 100.0;

/// Singular values below `rel_cutoff * sigma_max` are treated as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinvSpec {
    pub rel_cutoff: f64,
}

impl Default for PinvSpec {
    fn default() -> Self {
        Self { rel_cutoff: 1e-10 }
    }
}

impl PinvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_cutoff > 0.0 && self.rel_cutoff < 1.0) {
            return Err(Error::Validation(format!("pinv rel_cutoff must lie in (0, 1), got {}", self.rel_cutoff)));
        }
        Ok(())
    }
}

/// A pseudo-inverse together with its spectral diagnostics.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: DMatrix<f64>,
    /// Number of retained eigenvalues.
    pub rank: usize,
    /// `sigma_max / sigma_min` over the retained spectrum; `None` when rank is 0.
    pub condition: Option<f64>,
    /// Eigenvalues of the input, descending.
    pub eigenvalues: Vec<f64>,
}

impl Pinv {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Pseudo-inverse of a symmetric matrix through its eigendecomposition.
///
/// Eigenvalues with `|lambda| < rel_cutoff * max |lambda|` are annihilated.
/// The input must be symmetric to `1e-12` (scaled by its largest entry when that
/// exceeds one); otherwise a contract error is returned.
pub fn pinv_psd(g: &DMatrix<f64>, spec: &PinvSpec) -> Result<Pinv> {
    spec.validate().map_err(|e| Error::Contract(e.to_string()))?;
    pinv_with(g, |eigenvalues| spec.rel_cutoff * eigenvalues.amax())
}

/// As [`pinv_psd`] with an absolute threshold: eigenvalues with
/// `|lambda| < floor` are annihilated.
pub fn pinv_psd_floor(g: &DMatrix<f64>, floor: f64) -> Result<Pinv> {
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::Contract(format!("pinv floor must be finite and non-negative, got {floor}")));
    }
    pinv_with(g, |_| floor)
}

/// Generalized inverse of a Gram matrix that truncates the leading `m x m`
/// block first and the trailing elements only in what they add beyond it.
///
/// `full` is [`pinv_psd`] of the whole matrix; its largest eigenvalue sets the
/// threshold for the second stage and its spectrum is kept for diagnostics.
/// With `P1` the truncated pseudo-inverse of `G11` and `S = G22 - G21 P1 G12`
/// (the Gram matrix of the trailing elements after projecting out the
/// retained leading span),
///
/// ```text
/// H = [ P1 + P1 G12 S+ G21 P1   -P1 G12 S+ ]
///     [ -S+ G21 P1               S+        ]
/// ```
///
/// `alpha = H z` gives the projection onto the retained leading span plus the
/// retained trailing residuals. Without truncation this is the projection onto
/// the full span, as `G+` gives. With it, the retained subspace always contains
/// the one retained for the leading block alone, so trailing elements can only
/// shrink residuals.
pub fn pinv_nested(g: &DMatrix<f64>, m: usize, spec: &PinvSpec, full: Pinv) -> Result<(Pinv, NestedFactors)> {
    let l = g.nrows();
    let q = l - m;
    let p1 = pinv_psd(&g.view((0, 0), (m, m)).into_owned(), spec)?;
    let g12 = g.view((0, m), (m, q));
    let c = &p1.matrix * g12;
    let schur = g.view((m, m), (q, q)) - g12.transpose() * &c;
    let schur = (&schur + schur.transpose()) * 0.5;
    // S is PSD in exact arithmetic, so its most negative eigenvalue shows the
    // rounding left by the cancellation. When G11 is nearly singular that
    // noise can exceed the relative threshold; it is never inverted.
    let floor = spec.rel_cutoff * full.max_eigenvalue().max(0.0);
    let ps = pinv_with(&schur, |ev| floor.max(SCHUR_NOISE_FACTOR * (-ev.min()).max(0.0)))?;
    let cs = &c * &ps.matrix;
    let mut h = DMatrix::zeros(l, l);
    h.view_mut((0, 0), (m, m)).copy_from(&(&p1.matrix + &cs * c.transpose()));
    h.view_mut((0, m), (m, q)).copy_from(&(-&cs));
    h.view_mut((m, 0), (q, m)).copy_from(&(-cs.transpose()));
    h.view_mut((m, m), (q, q)).copy_from(&ps.matrix);
    let h = (&h + h.transpose()) * 0.5;

    let smallest =
        [&p1, &ps].iter().filter_map(|p| p.condition.map(|c| p.max_eigenvalue() / c)).fold(f64::INFINITY, f64::min);
    let rank = p1.rank + ps.rank;
    let pinv = Pinv {
        matrix: h,
        rank,
        condition: (rank > 0).then(|| full.max_eigenvalue() / smallest),
        eigenvalues: full.eigenvalues,
    };
    Ok((pinv, NestedFactors { m, p1: p1.matrix, c, schur_pinv: ps.matrix, uplink_rank: p1.rank }))
}

/// `P1 = G11+`, `C = P1 G12` and `S+` of the nested inverse.
#[derive(Debug, Clone)]
pub struct NestedFactors {
    pub m: usize,
    pub p1: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub schur_pinv: DMatrix<f64>,
    pub uplink_rank: usize,
}

impl NestedFactors {
    /// `H z` evaluated stage by stage; `g` is the matrix the factors came from.
    pub fn apply(&self, g: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let q = z.len() - m;
        let a1 = &self.p1 * z.rows(0, m);
        // inner products of the trailing residuals with what stage one left over
        let t = z.rows(m, q) - g.view((0, m), (m, q)).transpose() * &a1;
        let gamma = &self.schur_pinv * t;
        let mut alpha = DVector::zeros(z.len());
        alpha.rows_mut(0, m).copy_from(&(a1 - &self.c * &gamma));
        alpha.rows_mut(m, q).copy_from(&gamma);
        alpha
    }
}

fn pinv_with(g: &DMatrix<f64>, threshold_for: impl Fn(&DVector<f64>) -> f64) -> Result<Pinv> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::Contract(format!("pinv_psd needs a square matrix, got {}x{}", n, g.ncols())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("pinv_psd input has non-finite entries".into()));
    }
    let scale = g.amax().max(1.0);
    let asym = (g - g.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Contract(format!("pinv_psd input is not symmetric (max |G - G^T| = {asym:e})")));
    }
    if n == 0 {
        return Ok(Pinv { matrix: DMatrix::zeros(0, 0), rank: 0, condition: None, eigenvalues: vec![] });
    }

    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sigma_max = eig.eigenvalues.amax();
    let threshold = threshold_for(&eig.eigenvalues);

    let mut inv = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    let mut sigma_min = f64::INFINITY;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if sigma_max == 0.0 || lambda.abs() < threshold {
            continue;
        }
        rank += 1;
        sigma_min = sigma_min.min(lambda.abs());
        let u = eig.eigenvectors.column(i);
        inv.ger(1.0 / lambda, &u, &u, 1.0);
    }
    // exact symmetry of the result
    let inv = (&inv + inv.transpose()) * 0.5;

    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));

    Ok(Pinv { matrix: inv, rank, condition: (rank > 0).then(|| sigma_max / sigma_min), eigenvalues })
}
