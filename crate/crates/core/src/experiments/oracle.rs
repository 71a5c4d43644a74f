//! Brute-force projection residuals on a uniform grid.
//!
//! Every function is replaced by its samples; inner products become trapezoid
//! sums and the projection is an ordinary weighted least-squares fit. Nothing
//! here touches the Bessel closed forms or adaptive quadrature, so agreement
//! with the symbolic path is an independent check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{trapezoid_weights, AngularFunction, GridFunction, Side, THETA_MAX, THETA_MIN};
use crate::numerics::{pinv_nested, pinv_psd, NestedFactors, PinvSpec};

/// Grid nodes closer than this to a mask boundary are treated as lying on it.
const NODE_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Number of uniform nodes over `[-pi/2, pi/2]`; odd, at least 201.
    pub grid_points: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { grid_points: 4001 }
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 201 || self.grid_points.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "oracle grid needs an odd number of points >= 201, got {}",
                self.grid_points
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.grid_points)
    }
}

/// Sample sites: grid nodes, with nodes on a jump split into both one-sided
/// limits carrying half the weight each.
struct Sites {
    theta: Vec<f64>,
    side: Vec<Option<Side>>,
    weight: Vec<f64>,
}

impl Sites {
    fn new(spec: &OracleSpec, jumps: &[f64]) -> Result<Self> {
        spec.validate()?;
        let nodes = GridFunction::uniform_nodes(spec.grid_points)?;
        let weights = spec.weights();
        let mut s = Sites { theta: Vec::new(), side: Vec::new(), weight: Vec::new() };
        for (&t, &w) in nodes.iter().zip(&weights) {
            let interior = t > THETA_MIN && t < THETA_MAX;
            let jump = jumps.iter().copied().find(|j| (j - t).abs() <= NODE_SNAP);
            if let (true, Some(j)) = (interior, jump) {
                // limits are taken at the boundary itself, not the rounded node
                for side in [Side::Left, Side::Right] {
                    s.theta.push(j);
                    s.side.push(Some(side));
                    s.weight.push(0.5 * w);
                }
            } else {
                s.theta.push(t);
                s.side.push(None);
                s.weight.push(w);
            }
        }
        Ok(s)
    }

    fn sample(&self, f: &AngularFunction) -> DVector<f64> {
        DVector::from_iterator(
            self.theta.len(),
            self.theta.iter().zip(&self.side).map(|(&t, side)| match side {
                Some(sd) => f.evaluate_limit(t, *sd),
                None => f.evaluate(t),
            }),
        )
    }
}

fn jumps_of<'a>(fs: impl IntoIterator<Item = &'a AngularFunction>) -> Vec<f64> {
    let mut v: Vec<f64> = fs.into_iter().filter_map(|f| f.mask.as_ref()).flat_map(|m| m.boundaries()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// A basis discretized once, ready to project many targets.
pub struct OracleProjector {
    sites: Sites,
    /// `sqrt(w_i) x_j(theta_i)`.
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
    nested: Option<NestedFactors>,
    pub rank: usize,
}

impl OracleProjector {
    /// `extra` lists targets whose mask boundaries must also be respected.
    pub fn new(
        basis: &[AngularFunction],
        extra: &[AngularFunction],
        spec: &OracleSpec,
        pinv: &PinvSpec,
    ) -> Result<Self> {
        Self::with_leading(basis, basis.len(), extra, spec, pinv)
    }

    /// As [`new`](Self::new), truncating the first `leading` basis elements
    /// before the rest (see [`pinv_nested`]), as the conversion Gram system does
    /// for uplink kernels followed by constraints.
    pub fn with_leading(
        basis: &[AngularFunction],
        leading: usize,
        extra: &[AngularFunction],
        spec: &OracleSpec,
        pinv: &PinvSpec,
    ) -> Result<Self> {
        if leading > basis.len() {
            return Err(Error::Contract(format!("{leading} leading elements of a basis of {}", basis.len())));
        }
        let sites = Sites::new(spec, &jumps_of(basis.iter().chain(extra)))?;
        let sw: DVector<f64> = DVector::from_iterator(sites.weight.len(), sites.weight.iter().map(|w| w.sqrt()));
        let mut x = DMatrix::zeros(sites.theta.len(), basis.len());
        for (j, f) in basis.iter().enumerate() {
            x.set_column(j, &sites.sample(f).component_mul(&sw));
        }
        let gram = x.transpose() * &x;
        let gram = 0.5 * (&gram + gram.transpose());
        let full = pinv_psd(&gram, pinv)?;
        let (p, nested) = if leading < basis.len() {
            let (p, f) = pinv_nested(&gram, leading, pinv, full)?;
            (p, Some(f))
        } else {
            (full, None)
        };
        Ok(Self { sites, x, gram, gram_pinv: p.matrix, nested, rank: p.rank })
    }

    /// Weighted norm of `y - P(y)`, computed from the residual samples.
    pub fn residual(&self, y: &AngularFunction) -> f64 {
        let yw = self.sites.sample(y).zip_map(&DVector::from_column_slice(&self.sites.weight), |v, w| v * w.sqrt());
        let z = self.x.transpose() * &yw;
        let alpha = match &self.nested {
            Some(f) => f.apply(&self.gram, &z),
            None => &self.gram_pinv * z,
        };
        (yw - &self.x * alpha).norm()
    }
}

/// `||y - P_M(y)||` for `M = span(basis)` on the grid of `spec`.
pub fn oracle_residual(y: &AngularFunction, basis: &[AngularFunction], spec: &OracleSpec) -> Result<f64> {
    let proj = OracleProjector::new(basis, std::slice::from_ref(y), spec, &PinvSpec::default())?;
    Ok(proj.residual(y))
}
