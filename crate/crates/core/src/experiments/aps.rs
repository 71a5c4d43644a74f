//! Synthetic angular power spectra built from Laplacian peaks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{density_norm_sq, AngularDensity, SupportSet};
use crate::numerics::QuadratureSpec;

/// One term `w * exp(-|theta - center| / scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    pub center: f64,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    UnitNorm,
    Raw,
}

/// `rho(theta) = n * sum_j w_j exp(-|theta - c_j| / s_j)`, optionally zeroed
/// outside a support set. With [`Normalization::UnitNorm`] the constant `n`
/// makes `||rho|| = 1`; otherwise `n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApsModel {
    pub peaks: Vec<Peak>,
    pub normalization: Normalization,
    /// Spectrum is truncated to this set when present.
    pub support: Option<SupportSet>,
    pub n: f64,
}

impl ApsModel {
    pub fn new(
        peaks: Vec<Peak>,
        normalization: Normalization,
        support: Option<SupportSet>,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        for p in &peaks {
            if !(p.center.is_finite() && p.scale.is_finite() && p.weight.is_finite()) {
                return Err(Error::Validation(format!("peak {p:?} is not finite")));
            }
            if p.scale <= 0.0 {
                return Err(Error::Validation(format!("peak scale must be positive, got {}", p.scale)));
            }
            if p.weight < 0.0 {
                return Err(Error::Validation(format!("peak weight must be non-negative, got {}", p.weight)));
            }
        }
        if support.as_ref().is_some_and(SupportSet::is_empty) {
            return Err(Error::Validation("spectrum support must not be empty".into()));
        }
        let mut model = Self { peaks, normalization, support, n: 1.0 };
        if normalization == Normalization::UnitNorm {
            let raw = density_norm_sq(&model, quad)?.value;
            if raw <= 0.0 {
                return Err(Error::Validation("cannot normalize a spectrum that is identically zero".into()));
            }
            model.n = raw.sqrt().recip();
        }
        Ok(model)
    }

    /// The two-path example spectrum: peaks at 0.5 and 1.4 rad, scale 0.05,
    /// weights 1 and 4, unit norm.
    pub fn two_path(quad: &QuadratureSpec) -> Result<Self> {
        Self::new(
            vec![Peak { center: 0.5, scale: 0.05, weight: 1.0 }, Peak { center: 1.4, scale: 0.05, weight: 4.0 }],
            Normalization::UnitNorm,
            None,
            quad,
        )
    }

    /// Same peaks restricted to `support`, renormalized.
    pub fn truncated(&self, support: &SupportSet, quad: &QuadratureSpec) -> Result<Self> {
        let support = match &self.support {
            Some(s) => s.intersect(support),
            None => support.clone(),
        };
        Self::new(self.peaks.clone(), self.normalization, Some(support), quad)
    }

    /// The zero spectrum.
    pub fn zero() -> Self {
        Self { peaks: Vec::new(), normalization: Normalization::Raw, support: None, n: 1.0 }
    }

    fn raw(&self, theta: f64) -> f64 {
        self.peaks.iter().map(|p| p.weight * (-(theta - p.center).abs() / p.scale).exp()).sum()
    }

    /// `||rho restricted to the closure of the complement of c_s||`.
    pub fn norm_outside(&self, c_s: &SupportSet, quad: &QuadratureSpec) -> Result<f64> {
        let outside = self.kept().intersect(&c_s.complement());
        if outside.is_empty() {
            return Ok(0.0);
        }
        let restricted = Self { support: Some(outside), ..self.clone() };
        Ok(density_norm_sq(&restricted, quad)?.value.sqrt())
    }
}

impl AngularDensity for ApsModel {
    fn value(&self, theta: f64) -> f64 {
        match &self.support {
            Some(s) if !s.contains(theta) => 0.0,
            _ => self.n * self.raw(theta),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.peaks.iter().map(|p| p.center).collect();
        if let Some(s) = &self.support {
            v.extend(s.boundaries());
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn kept(&self) -> SupportSet {
        self.support.clone().unwrap_or_else(SupportSet::full)
    }
}

/// Seeded generator of unit-norm peak mixtures supported inside a set.
///
/// Each draw has 1 to 4 peaks with centers uniform over the set (by length),
/// scales in `[0.02, 0.3]` and weights in `[0.1, 1]`.
pub struct MixtureSampler {
    rng: ChaCha8Rng,
    support: SupportSet,
    quad: QuadratureSpec,
}

impl MixtureSampler {
    pub fn new(seed: u64, support: &SupportSet, quad: &QuadratureSpec) -> Result<Self> {
        if support.is_empty() || support.measure() <= 0.0 {
            return Err(Error::Validation("mixture support must have positive length".into()));
        }
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(seed), support: support.clone(), quad: *quad })
    }

    fn center(&mut self) -> f64 {
        let mut u = self.rng.gen_range(0.0..self.support.measure());
        for &(a, b) in self.support.intervals() {
            if u <= b - a {
                return a + u;
            }
            u -= b - a;
        }
        self.support.intervals().last().map_or(0.0, |iv| iv.1)
    }

    pub fn draw(&mut self) -> Result<ApsModel> {
        let count = self.rng.gen_range(1..=4);
        let peaks = (0..count)
            .map(|_| Peak {
                center: self.center(),
                scale: self.rng.gen_range(0.02..=0.3),
                weight: self.rng.gen_range(0.1..=1.0),
            })
            .collect();
        ApsModel::new(peaks, Normalization::UnitNorm, Some(self.support.clone()), &self.quad)
    }
}
