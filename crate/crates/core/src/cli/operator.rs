//! Exported conversion operators.
//!
//! Matrices are stored row-major as flat arrays. Floats are written in the
//! shortest form that parses back to the same bits, so an import reproduces the
//! in-process operator exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::array_model::UlaConfig;
use crate::conversion::ConversionOperator;
use crate::error::{Error, Result};
use crate::experiments::Regime;
use crate::hilbert::SupportSet;
use crate::numerics::{PinvSpec, QuadratureSpec};

pub const OPERATOR_FORMAT: &str = "apscast-operator/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub format: String,
    /// Number of antennas; `A` is `2n x 2n`.
    pub n: usize,
    /// Number of basis functions; `G` is `L x L` and `Q` is `L x 2n`.
    #[serde(rename = "L")]
    pub l: usize,
    pub rank: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub offset: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    pub config: UlaConfig,
    pub support: Option<SupportSet>,
    pub quad: QuadratureSpec,
    pub pinv: PinvSpec,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Validation(format!(
            "operator field {name} has {} entries, expected {rows}x{cols} = {}",
            data.len(),
            rows * cols
        )));
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("operator field {name} contains {v}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl OperatorFile {
    pub fn from_regime(r: &Regime) -> Self {
        Self {
            format: OPERATOR_FORMAT.to_string(),
            n: r.op.n,
            l: r.gs.len(),
            rank: r.op.rank,
            a: row_major(&r.op.a),
            offset: r.op.offset.as_slice().to_vec(),
            g: row_major(&r.gs.g),
            q: row_major(&r.op.q),
            config: r.fs.config,
            support: r.fs.support.clone(),
            quad: r.gs.quad,
            pinv: r.gs.pinv_spec,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Numerical(format!("operator serialization failed: {e}")))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| Error::Validation(format!("{origin}: {e}")))?;
        if f.format != OPERATOR_FORMAT {
            return Err(Error::Validation(format!(
                "{origin}: unsupported operator format {:?}, expected {OPERATOR_FORMAT:?}",
                f.format
            )));
        }
        Ok(f)
    }

    /// Rebuilds the operator, checking every shape.
    pub fn to_operator(&self) -> Result<ConversionOperator> {
        let m = 2 * self.n;
        let a = from_row_major(m, m, &self.a, "A")?;
        let q = from_row_major(self.l, m, &self.q, "Q")?;
        from_row_major(self.l, self.l, &self.g, "G")?;
        if self.offset.len() != m {
            return Err(Error::Validation(format!("operator offset has {} entries, expected {m}", self.offset.len())));
        }
        let mut op = ConversionOperator::from_matrix(self.n, a, self.rank)?;
        op.offset = DVector::from_column_slice(&self.offset);
        op.q = q;
        Ok(op)
    }
}
