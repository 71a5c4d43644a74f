//! Elements of `L2([-pi/2, pi/2])` and projections onto finite spans.
//!
//! Array-manifold kernels are kept symbolic as `scale * trig(omega * sin(theta))`,
//! optionally zeroed on a [`SupportSet`]. Pairs of unmasked kernels have exact
//! inner products through `int cos(a sin t) dt = pi J0(a)` and
//! `int sin(a sin t) dt = 0`; everything else goes through adaptive quadrature
//! over the explicit pieces where both factors are non-zero.
//!
//! Two functions are considered equal when their difference has zero norm;
//! nothing here compares functions pointwise.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bessel::j0, integrate_breaks, Integral, QuadratureSpec};

/// Lower end of the angular domain.
pub const THETA_MIN: f64 = -FRAC_PI_2;
/// Upper end of the angular domain.
pub const THETA_MAX: f64 = FRAC_PI_2;

/// Negative radicands in `||y||^2 - z^T G+ z` above this magnitude are errors.
pub const RESIDUAL_CLAMP: f64 = 1e-9;

const EDGE_SLACK: f64 = 1e-12;

/// A finite union of disjoint closed intervals inside `[-pi/2, pi/2]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct SupportSet {
    intervals: Vec<(f64, f64)>,
}

impl SupportSet {
    /// Builds a set from `[a, b]` pairs in any order. Endpoints within `1e-12`
    /// of the domain edges are snapped onto them.
    pub fn new(intervals: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in intervals {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Validation(format!("support interval [{a}, {b}] is not finite")));
            }
            if a > b {
                return Err(Error::Validation(format!("support interval [{a}, {b}] has a > b")));
            }
            if a < THETA_MIN - EDGE_SLACK || b > THETA_MAX + EDGE_SLACK {
                return Err(Error::Validation(format!("support interval [{a}, {b}] leaves [-pi/2, pi/2]")));
            }
            out.push((a.max(THETA_MIN), b.min(THETA_MAX)));
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in out.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::Validation(format!(
                    "support intervals [{}, {}] and [{}, {}] are not disjoint",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { intervals: out })
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    pub fn full() -> Self {
        Self { intervals: vec![(THETA_MIN, THETA_MAX)] }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Lebesgue measure, in `[0, pi]`.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= theta && theta <= b)
    }

    /// Closure of the complement in `[-pi/2, pi/2]`. Gaps of zero width are dropped.
    pub fn complement(&self) -> SupportSet {
        let mut out = Vec::new();
        let mut cursor = THETA_MIN;
        for &(a, b) in &self.intervals {
            if a > cursor {
                out.push((cursor, a));
            }
            cursor = cursor.max(b);
        }
        if cursor < THETA_MAX {
            out.push((cursor, THETA_MAX));
        }
        SupportSet { intervals: out }
    }

    /// Pairwise intersection with positive-width pieces only.
    pub fn intersect(&self, other: &SupportSet) -> SupportSet {
        let mut out = Vec::new();
        for &(a, b) in &self.intervals {
            for &(c, d) in &other.intervals {
                let lo = a.max(c);
                let hi = b.min(d);
                if hi > lo {
                    out.push((lo, hi));
                }
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        SupportSet { intervals: out }
    }

    /// Interval endpoints, sorted, without duplicates.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.intervals.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.dedup();
        v
    }

    fn contains_from(&self, theta: f64, side: Side) -> bool {
        self.intervals.iter().any(|&(a, b)| match side {
            Side::Left => a < theta && theta <= b,
            Side::Right => a <= theta && theta < b,
        })
    }
}

impl TryFrom<Vec<[f64; 2]>> for SupportSet {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        SupportSet::new(v.into_iter().map(|[a, b]| (a, b)))
    }
}

impl From<SupportSet> for Vec<[f64; 2]> {
    fn from(s: SupportSet) -> Self {
        s.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

/// Direction of a one-sided limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cosine,
    Sine,
}

/// `scale * trig(omega * sin(theta))`, zeroed on `mask` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularFunction {
    pub trig: Trig,
    pub omega: f64,
    pub mask: Option<SupportSet>,
    pub scale: f64,
}

impl AngularFunction {
    pub fn cosine(omega: f64) -> Self {
        Self { trig: Trig::Cosine, omega, mask: None, scale: 1.0 }
    }

    pub fn sine(omega: f64) -> Self {
        Self { trig: Trig::Sine, omega, mask: None, scale: 1.0 }
    }

    pub fn constant(value: f64) -> Self {
        Self { scale: value, ..Self::cosine(0.0) }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn is_masked(&self) -> bool {
        self.mask.is_some()
    }

    /// True when the function is identically zero (not merely of zero norm
    /// through cancellation).
    pub fn is_zero(&self) -> bool {
        self.scale == 0.0 || (self.trig == Trig::Sine && self.omega == 0.0) || self.kept().is_empty()
    }

    /// The unmasked kernel evaluated from a precomputed `sin(theta)`.
    #[inline]
    pub fn kernel(&self, sin_theta: f64) -> f64 {
        let phase = self.omega * sin_theta;
        self.scale
            * match self.trig {
                Trig::Cosine => phase.cos(),
                Trig::Sine => phase.sin(),
            }
    }

    pub fn evaluate(&self, theta: f64) -> f64 {
        match &self.mask {
            Some(m) if m.contains(theta) => 0.0,
            _ => self.kernel(theta.sin()),
        }
    }

    /// One-sided limit at `theta`; differs from [`evaluate`](Self::evaluate) only
    /// on mask boundaries.
    pub fn evaluate_limit(&self, theta: f64, side: Side) -> f64 {
        match &self.mask {
            Some(m) if m.contains_from(theta, side) => 0.0,
            _ => self.kernel(theta.sin()),
        }
    }

    /// Closed pieces of the domain on which the function may be non-zero.
    pub fn kept(&self) -> SupportSet {
        match &self.mask {
            Some(m) => m.complement(),
            None => SupportSet::full(),
        }
    }

    /// Zeroes the function on `c_s`: the projection onto the functions that
    /// vanish on `c_s`. Masking twice is a contract error.
    pub fn mask(&self, c_s: &SupportSet) -> Result<AngularFunction> {
        if self.mask.is_some() {
            return Err(Error::Contract("function is already masked".into()));
        }
        Ok(Self { mask: Some(c_s.clone()), ..self.clone() })
    }
}

/// Free-function form of [`AngularFunction::mask`].
pub fn mask(f: &AngularFunction, c_s: &SupportSet) -> Result<AngularFunction> {
    f.mask(c_s)
}

/// Something that can be integrated against angular kernels.
pub trait AngularDensity: Sync {
    fn value(&self, theta: f64) -> f64;
    /// Points where the density has a kink or jump.
    fn breakpoints(&self) -> Vec<f64>;
    /// Closed pieces outside of which the density vanishes.
    fn kept(&self) -> SupportSet {
        SupportSet::full()
    }
}

impl AngularDensity for AngularFunction {
    fn value(&self, theta: f64) -> f64 {
        self.evaluate(theta)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.mask.as_ref().map(SupportSet::boundaries).unwrap_or_default()
    }
    fn kept(&self) -> SupportSet {
        AngularFunction::kept(self)
    }
}

/// Exact inner product of two unmasked kernels, or `None` when a mask is present.
pub fn closed_form_inner_product(f: &AngularFunction, g: &AngularFunction) -> Option<f64> {
    if f.is_masked() || g.is_masked() {
        return None;
    }
    let s = f.scale * g.scale;
    let (a, b) = (f.omega, g.omega);
    let v = match (f.trig, g.trig) {
        (Trig::Cosine, Trig::Cosine) => FRAC_PI_2 * (j0(a - b) + j0(a + b)),
        (Trig::Sine, Trig::Sine) => FRAC_PI_2 * (j0(a - b) - j0(a + b)),
        _ => 0.0,
    };
    Some(s * v)
}

/// `<f, g>` by adaptive quadrature, regardless of masks.
pub fn quadrature_inner_product(f: &AngularFunction, g: &AngularFunction, quad: &QuadratureSpec) -> Result<Integral> {
    let pieces = f.kept().intersect(&g.kept());
    let mut total = Integral::ZERO;
    if f.is_zero() || g.is_zero() {
        return Ok(total);
    }
    for &(a, b) in pieces.intervals() {
        let part = integrate_breaks(
            |t: f64| {
                let s = t.sin();
                f.kernel(s) * g.kernel(s)
            },
            &[a, b],
            quad,
        )?;
        total = total.combine(part);
    }
    Ok(total)
}

/// `<f, g> = int f(t) g(t) dt` over `[-pi/2, pi/2]`.
///
/// Uses the exact Bessel form when neither argument is masked, quadrature
/// otherwise.
pub fn inner_product(f: &AngularFunction, g: &AngularFunction, quad: &QuadratureSpec) -> Result<Integral> {
    match closed_form_inner_product(f, g) {
        Some(value) => Ok(Integral { value, error_estimate: 0.0, converged: true }),
        None => quadrature_inner_product(f, g, quad),
    }
}

/// `||f||^2`.
pub fn norm_sq(f: &AngularFunction, quad: &QuadratureSpec) -> Result<Integral> {
    inner_product(f, f, quad)
}

/// `<d, f>` for an arbitrary density against a kernel, with panel breaks at the
/// kinks of `d` and the mask boundaries of `f`.
pub fn density_inner_product<D: AngularDensity + ?Sized>(
    d: &D,
    f: &AngularFunction,
    quad: &QuadratureSpec,
) -> Result<Integral> {
    if f.is_zero() {
        return Ok(Integral::ZERO);
    }
    let pieces = d.kept().intersect(&f.kept());
    let kinks = d.breakpoints();
    let mut total = Integral::ZERO;
    for &(a, b) in pieces.intervals() {
        let mut breaks = vec![a];
        breaks.extend(kinks.iter().copied().filter(|&x| x > a && x < b));
        breaks.push(b);
        breaks.sort_by(f64::total_cmp);
        let part = integrate_breaks(|t: f64| d.value(t) * f.kernel(t.sin()), &breaks, quad)?;
        total = total.combine(part);
    }
    Ok(total)
}

/// `||d||^2` for an arbitrary density.
pub fn density_norm_sq<D: AngularDensity + ?Sized>(d: &D, quad: &QuadratureSpec) -> Result<Integral> {
    let kinks = d.breakpoints();
    let mut total = Integral::ZERO;
    for &(a, b) in d.kept().intervals() {
        let mut breaks = vec![a];
        breaks.extend(kinks.iter().copied().filter(|&x| x > a && x < b));
        breaks.push(b);
        breaks.sort_by(f64::total_cmp);
        let part = integrate_breaks(
            |t: f64| {
                let v = d.value(t);
                v * v
            },
            &breaks,
            quad,
        )?;
        total = total.combine(part);
    }
    Ok(total)
}

/// `z_k = <x_k, y>` for every basis element.
pub fn basis_inner_products(
    basis: &[AngularFunction],
    y: &AngularFunction,
    quad: &QuadratureSpec,
) -> Result<DVector<f64>> {
    let z = basis.iter().map(|x| inner_product(x, y, quad).map(|i| i.value)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(z))
}

fn check_dims(basis_len: usize, g_pinv: &DMatrix<f64>) -> Result<()> {
    if g_pinv.nrows() != basis_len || g_pinv.ncols() != basis_len {
        return Err(Error::Contract(format!(
            "pseudo-inverse is {}x{} but the basis has {} elements",
            g_pinv.nrows(),
            g_pinv.ncols(),
            basis_len
        )));
    }
    Ok(())
}

/// Coefficients `alpha = G+ z` of the projection `P_M(y) = sum alpha_k x_k`.
pub fn projection_coefficients(
    basis: &[AngularFunction],
    g_pinv: &DMatrix<f64>,
    y: &AngularFunction,
    quad: &QuadratureSpec,
) -> Result<DVector<f64>> {
    check_dims(basis.len(), g_pinv)?;
    let z = basis_inner_products(basis, y, quad)?;
    Ok(g_pinv * z)
}

/// `sqrt(max(0, norm_sq - z^T G+ z))`, the distance from `y` to the span.
///
/// Radicands below `-1e-9` signal an inconsistent pseudo-inverse and are
/// reported as [`Error::Numerical`].
pub fn residual_from_parts(norm_sq: f64, z: &DVector<f64>, g_pinv: &DMatrix<f64>) -> Result<f64> {
    if z.len() != g_pinv.nrows() || g_pinv.nrows() != g_pinv.ncols() {
        return Err(Error::Contract(format!(
            "z has length {} but the pseudo-inverse is {}x{}",
            z.len(),
            g_pinv.nrows(),
            g_pinv.ncols()
        )));
    }
    let radicand = norm_sq - z.dot(&(g_pinv * z));
    if radicand < -RESIDUAL_CLAMP {
        return Err(Error::Numerical(format!(
            "projection residual radicand {radicand:e} is negative; the pseudo-inverse cutoff is likely too small"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// `||y - P_M(y)||` for `M = span(basis)`.
pub fn projection_residual(
    y: &AngularFunction,
    basis: &[AngularFunction],
    g_pinv: &DMatrix<f64>,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_dims(basis.len(), g_pinv)?;
    let z = basis_inner_products(basis, y, quad)?;
    let n = norm_sq(y, quad)?.value;
    residual_from_parts(n, &z, g_pinv)
}

/// `||y - sum alpha_j x_j||` by quadrature of the explicit residual function.
///
/// Equal to `sqrt(||y||^2 - z^T G+ z)` when `alpha = G+ z`, but without the
/// cancellation of that difference, so small residuals keep their digits even
/// when `G` is badly conditioned.
pub fn combination_residual<D: AngularDensity + ?Sized>(
    y: &D,
    basis: &[AngularFunction],
    alpha: &DVector<f64>,
    quad: &QuadratureSpec,
) -> Result<Integral> {
    if alpha.len() != basis.len() {
        return Err(Error::Contract(format!("{} coefficients for a basis of {} elements", alpha.len(), basis.len())));
    }
    let mut breaks = vec![THETA_MIN, THETA_MAX];
    breaks.extend(y.breakpoints());
    for f in basis {
        if let Some(m) = &f.mask {
            breaks.extend(m.boundaries());
        }
    }
    breaks.retain(|t| (THETA_MIN..=THETA_MAX).contains(t));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut total = Integral::ZERO;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        // masks are constant on the open piece
        let mid = 0.5 * (a + b);
        let terms: Vec<(f64, &AngularFunction)> = basis
            .iter()
            .zip(alpha.iter())
            .filter(|(f, c)| **c != 0.0 && !f.is_zero() && f.mask.as_ref().is_none_or(|m| !m.contains(mid)))
            .map(|(f, c)| (*c, f))
            .collect();
        let part = integrate_breaks(
            |t: f64| {
                let s = t.sin();
                let mut h = y.value(t);
                for (c, f) in &terms {
                    h -= c * f.kernel(s);
                }
                h * h
            },
            &[a, b],
            quad,
        )?;
        total = total.combine(part);
    }
    Ok(Integral { value: total.value.max(0.0).sqrt(), ..total })
}

/// Gram matrix of a basis, symmetric by construction.
pub fn gram_matrix(basis: &[AngularFunction], quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    let n = basis.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = inner_product(&basis[j], &basis[k], quad)?.value;
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    Ok(g)
}

/// Values on a uniform grid over `[-pi/2, pi/2]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn uniform_nodes(count: usize) -> Result<Vec<f64>> {
        if count < 3 {
            return Err(Error::Validation(format!("grid needs at least 3 nodes, got {count}")));
        }
        let h = PI / (count - 1) as f64;
        Ok((0..count).map(|i| if i == count - 1 { THETA_MAX } else { THETA_MIN + h * i as f64 }).collect())
    }

    pub fn sample(count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let nodes = Self::uniform_nodes(count)?;
        let values = nodes.iter().map(|&t| f(t)).collect();
        Ok(Self { nodes, values })
    }

    /// Composite trapezoid weights for the node layout.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nodes.len())
    }

    /// Trapezoid approximation of `<self, other>`; both must share nodes.
    pub fn inner_product(&self, other: &GridFunction) -> Result<f64> {
        if self.nodes.len() != other.nodes.len() {
            return Err(Error::Contract("grid functions live on different grids".into()));
        }
        Ok(self
            .trapezoid_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }
}

pub(crate) fn trapezoid_weights(count: usize) -> Vec<f64> {
    let h = PI / (count - 1) as f64;
    let mut w = vec![h; count];
    w[0] = 0.5 * h;
    w[count - 1] = 0.5 * h;
    w
}
