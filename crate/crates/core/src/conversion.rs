//! Gram system assembly and the uplink-to-downlink conversion operator.
//!
//! With observation kernels `x_1..x_L` (uplink kernels, then constraints), the
//! minimum-norm spectrum consistent with the uplink covariance is
//! `rho~ = sum alpha_j x_j` with `alpha = G+ [r; b]`. Its downlink covariance is
//! `Q^T G+ [r; b]`, which for zero right-hand sides collapses to `A r` with `A`
//! the first `2N` columns of `Q^T G+`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::FunctionSet;
use crate::error::{Error, Result};
use crate::hilbert::{inner_product, AngularDensity, AngularFunction, SupportSet};
use crate::numerics::{pinv_nested, pinv_psd, NestedFactors, Pinv, PinvSpec, QuadratureSpec};

/// Relative tolerance on negative Gram eigenvalues.
pub const PSD_TOL: f64 = 1e-9;

/// Matrix of pairwise inner products between all `x_j`, plus its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub basis: Vec<AngularFunction>,
    /// Number of leading uplink kernels in `basis` (`2N`).
    pub n_uplink: usize,
    /// Right-hand sides `b_j` of the constraints, one per trailing basis element.
    pub rhs: Vec<f64>,
    pub g: DMatrix<f64>,
    pub pinv: Pinv,
    /// Factors of the nested inverse when there are constraints.
    pub nested: Option<NestedFactors>,
    pub quad: QuadratureSpec,
    pub pinv_spec: PinvSpec,
    /// Entries `(j, k)` whose quadrature did not converge.
    pub flagged: Vec<(usize, usize)>,
}

impl GramSystem {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn g_pinv(&self) -> &DMatrix<f64> {
        &self.pinv.matrix
    }

    pub fn rank(&self) -> usize {
        self.pinv.rank
    }

    /// `G+ z`, evaluated block by block when the inverse is nested so that the
    /// large entries of the assembled matrix never multiply `z` directly.
    pub fn apply_pinv(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.nested {
            None => &self.pinv.matrix * z,
            Some(f) => f.apply(&self.g, z),
        }
    }

    /// `[r; b]`, the observation vector padded with constraint right-hand sides.
    pub fn padded(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.n_uplink {
            return Err(Error::Contract(format!(
                "uplink vector has length {} but the system expects {}",
                r.len(),
                self.n_uplink
            )));
        }
        let mut v = DVector::zeros(self.len());
        v.rows_mut(0, self.n_uplink).copy_from(r);
        for (j, b) in self.rhs.iter().enumerate() {
            v[self.n_uplink + j] = *b;
        }
        Ok(v)
    }
}

/// Assembles `G` over `fs.basis()`. Unmasked pairs use the Bessel closed form;
/// pairs with a masked factor use quadrature over the unmasked pieces.
pub fn build_gram_system(fs: &FunctionSet, quad: &QuadratureSpec, pinv: &PinvSpec) -> Result<GramSystem> {
    quad.validate()?;
    pinv.validate()?;
    let basis = fs.basis();
    let l = basis.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|j| (j..l).map(move |k| (j, k))).collect();
    let entries = pairs
        .par_iter()
        .map(|&(j, k)| inner_product(&basis[j], &basis[k], quad).map(|v| (j, k, v)))
        .collect::<Result<Vec<_>>>()?;

    let mut g = DMatrix::zeros(l, l);
    let mut flagged = Vec::new();
    for (j, k, v) in entries {
        g[(j, k)] = v.value;
        g[(k, j)] = v.value;
        if !v.converged {
            flagged.push((j, k));
        }
    }
    let full = pinv_psd(&g, pinv)?;
    if full.min_eigenvalue() < -PSD_TOL * full.max_eigenvalue().max(0.0) {
        return Err(Error::Numerical(format!(
            "Gram matrix is not positive semidefinite (min eigenvalue {:e}, max {:e})",
            full.min_eigenvalue(),
            full.max_eigenvalue()
        )));
    }
    let n_up = fs.uplink.len();
    let (p, nested) = if n_up < l {
        let (p, f) = pinv_nested(&g, n_up, pinv, full)?;
        (p, Some(f))
    } else {
        (full, None)
    };
    Ok(GramSystem {
        n_uplink: fs.uplink.len(),
        rhs: vec![0.0; fs.constraints.len()],
        basis,
        g,
        pinv: p,
        nested,
        quad: *quad,
        pinv_spec: *pinv,
        flagged,
    })
}

/// `Q[j, k] = <x_j, g_{d,k}>`.
pub fn downlink_cross_matrix(gs: &GramSystem, fs: &FunctionSet) -> Result<DMatrix<f64>> {
    let l = gs.len();
    let m = fs.downlink.len();
    let cells: Vec<(usize, usize)> = (0..l).flat_map(|j| (0..m).map(move |k| (j, k))).collect();
    let values = cells
        .par_iter()
        .map(|&(j, k)| inner_product(&gs.basis[j], &fs.downlink[k], &gs.quad).map(|v| v.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(l, m, |j, k| values[j * m + k]))
}

/// The precomputed linear map from uplink to downlink first-column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionOperator {
    pub n: usize,
    /// `L x 2N` cross inner products with the downlink kernels.
    pub q: DMatrix<f64>,
    /// `2N x 2N`, the first `2N` columns of `Q^T G+` (rows of downlink kernels
    /// that are basis elements are the matching unit vectors).
    pub a: DMatrix<f64>,
    /// `Q^T G+ [0; b]`; zero whenever all constraint right-hand sides are zero.
    pub offset: DVector<f64>,
    pub downlink_norms_sq: Vec<f64>,
    pub rank: usize,
}

impl ConversionOperator {
    /// Rebuilds an operator from an exported `A` alone.
    pub fn from_matrix(n: usize, a: DMatrix<f64>, rank: usize) -> Result<Self> {
        if a.nrows() != 2 * n || a.ncols() != 2 * n {
            return Err(Error::Validation(format!(
                "operator matrix is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                2 * n,
                2 * n
            )));
        }
        Ok(Self {
            n,
            q: DMatrix::zeros(0, 2 * n),
            a,
            offset: DVector::zeros(2 * n),
            downlink_norms_sq: Vec::new(),
            rank,
        })
    }

    /// `A r + offset`.
    pub fn apply(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != 2 * self.n {
            return Err(Error::Contract(format!(
                "uplink vector has length {} but the operator expects {}",
                r.len(),
                2 * self.n
            )));
        }
        Ok(&self.a * r + &self.offset)
    }
}

/// Coefficients `alpha` of `P_M(y) = sum alpha_j x_j`, given `z_j = <x_j, y>`.
///
/// Any solution of `G alpha = z` represents the projection. When `y` is itself
/// a basis element `x_j` the exact solution `e_j` is used; `G+ z` would only
/// reproduce it up to the truncation of the pseudo-inverse.
pub fn projection_alpha(gs: &GramSystem, y: &AngularFunction, z: &DVector<f64>) -> DVector<f64> {
    match gs.basis.iter().position(|x| x == y) {
        Some(j) => {
            let mut e = DVector::zeros(gs.len());
            e[j] = 1.0;
            e
        }
        None => gs.apply_pinv(z),
    }
}

/// Column `k` holds the projection coefficients of `g_{d,k}`.
pub fn downlink_coefficients(gs: &GramSystem, fs: &FunctionSet, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(gs.len(), fs.downlink.len());
    for (k, g) in fs.downlink.iter().enumerate() {
        let qk: DVector<f64> = q.column(k).into_owned();
        c.set_column(k, &projection_alpha(gs, g, &qk));
    }
    c
}

pub fn build_conversion_operator(gs: &GramSystem, fs: &FunctionSet) -> Result<ConversionOperator> {
    if gs.n_uplink != fs.uplink.len() || gs.len() != fs.uplink.len() + fs.constraints.len() {
        return Err(Error::Contract("Gram system was not built from this function set".into()));
    }
    let q = downlink_cross_matrix(gs, fs)?;
    let full = downlink_coefficients(gs, fs, &q).transpose();
    let m = gs.n_uplink;
    let a = full.columns(0, m).into_owned();
    let offset = if gs.rhs.iter().all(|b| *b == 0.0) {
        DVector::zeros(fs.downlink.len())
    } else {
        let tail = DVector::from_column_slice(&gs.rhs);
        full.columns(m, gs.len() - m) * tail
    };
    let downlink_norms_sq =
        fs.downlink.iter().map(|g| inner_product(g, g, &gs.quad).map(|v| v.value)).collect::<Result<Vec<_>>>()?;
    Ok(ConversionOperator { n: fs.n(), q, a, offset, downlink_norms_sq, rank: gs.rank() })
}

/// Hermitian Toeplitz covariance stored by its first column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceFile", into = "CovarianceFile")]
pub struct HermitianToeplitzCov {
    first_col: Vec<Complex64>,
}

/// On-disk form: `{"n": N, "first_col_re": [...], "first_col_im": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceFile {
    pub n: usize,
    pub first_col_re: Vec<f64>,
    pub first_col_im: Vec<f64>,
}

impl TryFrom<CovarianceFile> for HermitianToeplitzCov {
    type Error = Error;
    fn try_from(f: CovarianceFile) -> Result<Self> {
        if f.first_col_re.len() != f.n || f.first_col_im.len() != f.n {
            return Err(Error::Validation(format!(
                "covariance declares n = {} but has {} real and {} imaginary entries",
                f.n,
                f.first_col_re.len(),
                f.first_col_im.len()
            )));
        }
        HermitianToeplitzCov::from_parts(&f.first_col_re, &f.first_col_im)
    }
}

impl From<HermitianToeplitzCov> for CovarianceFile {
    fn from(c: HermitianToeplitzCov) -> Self {
        CovarianceFile {
            n: c.n(),
            first_col_re: c.first_col.iter().map(|z| z.re).collect(),
            first_col_im: c.first_col.iter().map(|z| z.im).collect(),
        }
    }
}

const DIAG_IMAG_TOL: f64 = 1e-12;

impl HermitianToeplitzCov {
    /// The diagonal must be real up to `1e-12` (relative to its real part when
    /// that exceeds one); it is then stored as exactly real.
    pub fn new(mut first_col: Vec<Complex64>) -> Result<Self> {
        if first_col.is_empty() {
            return Err(Error::Validation("covariance must have at least one entry".into()));
        }
        if first_col.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Validation("covariance has non-finite entries".into()));
        }
        let d = first_col[0];
        if d.im.abs() > DIAG_IMAG_TOL * d.re.abs().max(1.0) {
            return Err(Error::Validation(format!("covariance diagonal must be real, got imaginary part {:e}", d.im)));
        }
        first_col[0].im = 0.0;
        Ok(Self { first_col })
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Validation("real and imaginary parts differ in length".into()));
        }
        Self::new(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self { first_col: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// Inverse of [`to_vector`](Self::to_vector).
    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::Contract(format!("covariance vector has odd length {}", v.len())));
        }
        let n = v.len() / 2;
        Self::from_parts(v.rows(0, n).as_slice(), v.rows(n, n).as_slice())
    }

    pub fn n(&self) -> usize {
        self.first_col.len()
    }

    pub fn first_col(&self) -> &[Complex64] {
        &self.first_col
    }

    /// `[Re(c); Im(c)]`, the `2N` slot layout of the kernels.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(2 * n, |k, _| if k < n { self.first_col[k].re } else { self.first_col[k - n].im })
    }

    /// Entry `(row, col)` of the expanded matrix, 0-based.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        if row >= col {
            self.first_col[row - col]
        } else {
            self.first_col[col - row].conj()
        }
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |r, c| self.entry(r, c))
    }

    /// Smallest eigenvalue of the expanded Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        self.to_matrix().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Adds `max(0, -lambda_min)` to the diagonal. Unlike clipping negative
    /// eigenvalues, the shift keeps the matrix Toeplitz. Returns the shift.
    pub fn repair_psd(&self) -> (HermitianToeplitzCov, f64) {
        let shift = (-self.min_eigenvalue()).max(0.0);
        let mut first_col = self.first_col.clone();
        first_col[0].re += shift;
        (Self { first_col }, shift)
    }
}

/// Converts an uplink covariance into the downlink estimate `A r`.
pub fn convert(op: &ConversionOperator, r_u: &HermitianToeplitzCov) -> Result<HermitianToeplitzCov> {
    if r_u.n() != op.n {
        return Err(Error::Contract(format!(
            "covariance has {} antennas but the operator was built for {}",
            r_u.n(),
            op.n
        )));
    }
    let out = op.apply(&r_u.to_vector())?;
    HermitianToeplitzCov::from_vector(&out)
}

/// The minimum-norm spectrum consistent with the observations.
#[derive(Debug, Clone)]
pub struct ApsEstimate {
    pub alpha: DVector<f64>,
    pub basis: Vec<AngularFunction>,
    /// `alpha^T G alpha`.
    pub norm_sq: f64,
}

impl ApsEstimate {
    pub fn evaluate(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.basis
            .iter()
            .zip(self.alpha.iter())
            .filter(|(_, a)| **a != 0.0)
            .map(|(x, a)| {
                let v = match &x.mask {
                    Some(m) if m.contains(theta) => 0.0,
                    _ => x.kernel(s),
                };
                a * v
            })
            .sum()
    }

    /// `<rho~, f> = sum alpha_j <x_j, f>`, exact for unmasked pairs.
    pub fn inner_product(&self, f: &AngularFunction, quad: &QuadratureSpec) -> Result<f64> {
        let mut acc = 0.0;
        for (x, a) in self.basis.iter().zip(self.alpha.iter()) {
            if *a != 0.0 {
                acc += a * inner_product(x, f, quad)?.value;
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.max(0.0).sqrt()
    }
}

impl AngularDensity for ApsEstimate {
    fn value(&self, theta: f64) -> f64 {
        self.evaluate(theta)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> =
            self.basis.iter().filter_map(|x| x.mask.as_ref()).flat_map(SupportSet::boundaries).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// `rho~ = P_V(0)` with coefficients `alpha = G+ [r_u; b]`.
pub fn estimate_aps(gs: &GramSystem, r_u: &DVector<f64>) -> Result<ApsEstimate> {
    let rhs = gs.padded(r_u)?;
    let alpha = gs.apply_pinv(&rhs);
    let norm_sq = alpha.dot(&(&gs.g * &alpha));
    Ok(ApsEstimate { alpha, basis: gs.basis.clone(), norm_sq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{build_function_set, UlaConfig};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn small(n: usize) -> UlaConfig {
        UlaConfig { n_antennas: n, ..UlaConfig::table1() }
    }

    fn system(cfg: &UlaConfig, cs: Option<&SupportSet>) -> (FunctionSet, GramSystem, ConversionOperator) {
        let fs = build_function_set(cfg, cs).unwrap();
        let gs = build_gram_system(&fs, &QuadratureSpec::default(), &PinvSpec::default()).unwrap();
        let op = build_conversion_operator(&gs, &fs).unwrap();
        (fs, gs, op)
    }

    #[test]
    fn two_antenna_gram_entries() {
        let cfg = small(2);
        let (_, gs, _) = system(&cfg, None);
        let a = 2.0 * PI * cfg.spacing_in_wavelengths(cfg.f_up);
        let j = |x: f64| crate::numerics::bessel_j0(x).unwrap();
        assert!((gs.g[(0, 0)] - PI).abs() < 1e-15);
        assert!((gs.g[(0, 1)] - FRAC_PI_2 * 2.0 * j(a)).abs() < 1e-15);
        assert!((gs.g[(1, 1)] - FRAC_PI_2 * (1.0 + j(2.0 * a))).abs() < 1e-15);
        assert!((gs.g[(3, 3)] - FRAC_PI_2 * (1.0 - j(2.0 * a))).abs() < 1e-15);
        // slot N+1 is the zero function
        assert!(gs.g.row(2).iter().all(|v| *v == 0.0));
        assert!(gs.g.column(2).iter().all(|v| *v == 0.0));
        // cosine/sine blocks are orthogonal
        for r in 0..2 {
            for c in 2..4 {
                assert_eq!(gs.g[(r, c)], 0.0);
            }
        }
        assert_eq!(gs.rank(), 3);
    }

    #[test]
    fn table1_gram_is_rank_deficient() {
        let (_, gs, op) = system(&UlaConfig::table1(), None);
        assert_eq!(gs.len(), 60);
        assert!(gs.rank() < 60);
        assert_eq!(op.a.shape(), (60, 60));
        assert!((op.downlink_norms_sq[0] - PI).abs() < 1e-15);
        assert_eq!(op.downlink_norms_sq[30], 0.0);
        assert!(gs.flagged.is_empty());
    }

    #[test]
    fn zero_input_converts_to_zero() {
        let (_, _, op) = system(&small(4), None);
        let out = convert(&op, &HermitianToeplitzCov::zeros(4)).unwrap();
        assert!(out.first_col().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn reciprocal_operator_is_a_projection() {
        let cfg = UlaConfig { f_down: UlaConfig::table1().f_up, ..small(3) };
        let (_, gs, op) = system(&cfg, None);
        // any r in the column space of G is reproduced
        let alpha = DVector::from_fn(6, |k, _| (k as f64 * 0.7).sin());
        let r = &gs.g * alpha;
        assert!((op.apply(&r).unwrap() - &r).amax() < 1e-10);
        let aa = &op.a * &op.a;
        assert!((aa - &op.a).amax() < 1e-8);
        // every downlink kernel is a basis element
        assert_eq!(op.a, DMatrix::identity(6, 6));
    }

    #[test]
    fn basis_members_use_unit_coefficients() {
        let cs = SupportSet::new([(0.0, FRAC_PI_2)]).unwrap();
        let (fs, gs, op) = system(&small(4), Some(&cs));
        let mut e0 = DVector::zeros(8);
        e0[0] = 1.0;
        assert_eq!(op.a.row(0).transpose(), e0);
        let q = downlink_cross_matrix(&gs, &fs).unwrap();
        let alpha = projection_alpha(&gs, &fs.downlink[1], &q.column(1).into_owned());
        assert!((alpha - gs.apply_pinv(&q.column(1).into_owned())).amax() == 0.0);
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let (_, gs, op) = system(&small(2), None);
        assert!(matches!(convert(&op, &HermitianToeplitzCov::zeros(3)), Err(Error::Contract(_))));
        assert!(matches!(estimate_aps(&gs, &DVector::zeros(3)), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_uplink_gives_zero_estimate() {
        let cs = SupportSet::new([(0.0, FRAC_PI_2)]).unwrap();
        let (_, gs, _) = system(&small(3), Some(&cs));
        let est = estimate_aps(&gs, &DVector::zeros(6)).unwrap();
        assert!(est.alpha.iter().all(|a| *a == 0.0));
        assert_eq!(est.evaluate(-0.4), 0.0);
    }

    #[test]
    fn psd_repair_shifts_the_diagonal() {
        // [[1, 2], [2, 1]] has eigenvalues -1 and 3
        let c = HermitianToeplitzCov::from_parts(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        let (r, shift) = c.repair_psd();
        assert!((shift - 1.0).abs() < 1e-12);
        assert_eq!(r.first_col()[1], c.first_col()[1]);
        assert!(r.min_eigenvalue().abs() < 1e-12);
        let (same, zero) = r.repair_psd();
        assert!(zero < 1e-12 && (same.first_col()[0].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_validation() {
        assert!(HermitianToeplitzCov::from_parts(&[1.0, 0.5], &[0.1, 0.2]).is_err());
        let c = HermitianToeplitzCov::from_parts(&[1.0, 0.5], &[1e-14, 0.2]).unwrap();
        assert_eq!(c.first_col()[0].im, 0.0);
        let m = c.to_matrix();
        assert_eq!(m[(0, 1)], Complex64::new(0.5, -0.2));
        assert_eq!(m[(1, 0)], Complex64::new(0.5, 0.2));
        assert_eq!(m, m.adjoint());
        assert!(HermitianToeplitzCov::new(vec![]).is_err());
    }

    #[test]
    fn covariance_file_schema() {
        let text = r#"{"n": 2, "first_col_re": [1.0, 0.25], "first_col_im": [0.0, -0.5]}"#;
        let c: HermitianToeplitzCov = serde_json::from_str(text).unwrap();
        assert_eq!(c.first_col()[1], Complex64::new(0.25, -0.5));
        let back = serde_json::to_value(&c).unwrap();
        assert_eq!(back["n"], 2);
        assert!(serde_json::from_str::<HermitianToeplitzCov>(
            r#"{"n": 3, "first_col_re": [1.0], "first_col_im": [0.0]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<HermitianToeplitzCov>(
            r#"{"n": 1, "first_col_re": [1.0], "first_col_im": [0.0], "x": 1}"#
        )
        .is_err());
    }
}
