//! Uniform linear array kernels.
//!
//! For a ULA the covariance is Hermitian Toeplitz, so only its first column is
//! modelled. Slot `k` (1-based) of an ordered function list is
//!
//! * `cos(omega_k sin(theta))` for `k <= N`, the real part of entry `(k, 1)`;
//! * `sin(omega_{k-N} sin(theta))` for `k > N`, the imaginary part of entry `(k-N, 1)`;
//!
//! with `omega_k = 2 pi (f d / c) (k - 1)`. Slot `N + 1` is the zero function.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{AngularFunction, SupportSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlaConfig {
    pub n_antennas: usize,
    /// Inter-antenna spacing in meters.
    pub spacing: f64,
    pub f_up: f64,
    pub f_down: f64,
    pub wave_speed: f64,
}

impl UlaConfig {
    /// The array of the reference experiment: 30 antennas, spacing 1.05 uplink
    /// half-wavelengths, downlink at 19/18 of the uplink frequency.
    pub fn table1() -> Self {
        let f_up = 1.8e6;
        let wave_speed = 3e8;
        Self { n_antennas: 30, spacing: 1.05 * wave_speed / (2.0 * f_up), f_up, f_down: 1.9e6, wave_speed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 1 {
            return Err(Error::Validation("n_antennas must be >= 1".into()));
        }
        for (name, v) in
            [("spacing", self.spacing), ("f_up", self.f_up), ("f_down", self.f_down), ("wave_speed", self.wave_speed)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `d f / c`, antenna spacing in wavelengths at frequency `f`.
    pub fn spacing_in_wavelengths(&self, f: f64) -> f64 {
        self.spacing * f / self.wave_speed
    }

    /// Phase rate of antenna `n` (0-based) at frequency `f`.
    pub fn omega(&self, n: usize, f: f64) -> f64 {
        2.0 * PI * self.spacing_in_wavelengths(f) * n as f64
    }
}

/// Which covariance a function list describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Uplink,
    Downlink,
}

/// Slot layout shared by every function list and covariance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConvention {
    pub n: usize,
}

/// What a slot of the `2N` vector stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Real,
    Imag,
}

impl IndexConvention {
    pub fn len(&self) -> usize {
        2 * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Kind and Toeplitz lag of 0-based slot `k`.
    pub fn describe(&self, k: usize) -> (EntryKind, usize) {
        if k < self.n {
            (EntryKind::Real, k)
        } else {
            (EntryKind::Imag, k - self.n)
        }
    }
}

/// Options for the prior-information constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintOptions {
    /// Also add the masked uplink kernels. Off by default: with large arrays
    /// these make the Gram matrix markedly less stable.
    #[serde(default)]
    pub mask_uplink: bool,
}

/// Ordered uplink, downlink and constraint kernels for one array.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSet {
    pub config: UlaConfig,
    pub uplink: Vec<AngularFunction>,
    pub downlink: Vec<AngularFunction>,
    /// Masked kernels `v_j`, each with right-hand side 0.
    pub constraints: Vec<AngularFunction>,
    pub support: Option<SupportSet>,
    pub index_convention: IndexConvention,
}

impl FunctionSet {
    pub fn n(&self) -> usize {
        self.index_convention.n
    }

    pub fn link(&self, link: Link) -> &[AngularFunction] {
        match link {
            Link::Uplink => &self.uplink,
            Link::Downlink => &self.downlink,
        }
    }

    /// Uplink kernels followed by constraints: the spanning set of the
    /// observation subspace.
    pub fn basis(&self) -> Vec<AngularFunction> {
        self.uplink.iter().chain(&self.constraints).cloned().collect()
    }
}

fn first_column_kernels(cfg: &UlaConfig, f: f64) -> Vec<AngularFunction> {
    let n = cfg.n_antennas;
    let cos = (0..n).map(|k| AngularFunction::cosine(cfg.omega(k, f)));
    let sin = (0..n).map(|k| AngularFunction::sine(cfg.omega(k, f)));
    cos.chain(sin).collect()
}

/// Builds `2N` uplink and `2N` downlink kernels, plus `v_k = P_K(g_{d,k})` for
/// every downlink kernel when a support set is given.
pub fn build_function_set(cfg: &UlaConfig, c_s: Option<&SupportSet>) -> Result<FunctionSet> {
    build_function_set_with(cfg, c_s, ConstraintOptions::default())
}

pub fn build_function_set_with(
    cfg: &UlaConfig,
    c_s: Option<&SupportSet>,
    options: ConstraintOptions,
) -> Result<FunctionSet> {
    cfg.validate()?;
    let uplink = first_column_kernels(cfg, cfg.f_up);
    let downlink = first_column_kernels(cfg, cfg.f_down);
    let mut constraints = Vec::new();
    if let Some(s) = c_s {
        if s.is_empty() {
            return Err(Error::Validation("support set must not be empty".into()));
        }
        for g in &downlink {
            constraints.push(g.mask(s)?);
        }
        if options.mask_uplink {
            for g in &uplink {
                constraints.push(g.mask(s)?);
            }
        }
    }
    Ok(FunctionSet {
        config: *cfg,
        uplink,
        downlink,
        constraints,
        support: c_s.cloned(),
        index_convention: IndexConvention { n: cfg.n_antennas },
    })
}

/// Array response `a(theta, f)`, entry `n` = `exp(i 2 pi (f/c) d (n-1) sin(theta))`.
pub fn steering_vector(cfg: &UlaConfig, theta: f64, f: f64) -> Result<Vec<Complex64>> {
    if !(theta.is_finite() && theta.abs() <= FRAC_PI_2 + 1e-12) {
        return Err(Error::Domain(format!("steering angle {theta} outside [-pi/2, pi/2]")));
    }
    let s = theta.sin();
    Ok((0..cfg.n_antennas).map(|n| Complex64::from_polar(1.0, cfg.omega(n, f) * s)).collect())
}
