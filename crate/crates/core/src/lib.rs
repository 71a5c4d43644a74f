//! Uplink-to-downlink channel covariance conversion for antenna arrays.
//!
//! The angular power spectrum `rho` of a channel is treated as an element of
//! `L2([-pi/2, pi/2])`. Every real or imaginary part of a covariance entry is an
//! inner product `<rho, g_k>` with a known array-manifold kernel. Uplink
//! observations pin `rho` to a linear variety; the minimum-norm member of that
//! variety yields a downlink estimate through one matrix-vector product, and the
//! distance of each downlink kernel to the observation subspace bounds the error
//! of every converted entry.
//!
//! Module map:
//!
//! * [`numerics`]: `J0`, adaptive Gauss-Legendre quadrature, symmetric pseudo-inverse.
//! * [`hilbert`]: symbolic angular functions, support sets, projections.
//! * [`array_model`]: uniform linear array kernels.
//! * [`conversion`]: Gram system, conversion operator, APS estimate.
//! * [`bounds`]: per-entry error bounds.
//! * [`experiments`]: synthetic spectra, figure runners, grid oracle.
//! * [`cli`]: command-line front end.

pub mod array_model;
pub mod bounds;
pub mod cli;
pub mod conversion;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod numerics;

pub use array_model::{build_function_set, steering_vector, FunctionSet, UlaConfig};
pub use bounds::{bound_tightened_by_support, compute_bounds, BoundComparison, BoundReport};
pub use conversion::{
    build_conversion_operator, build_gram_system, convert, estimate_aps, ApsEstimate, ConversionOperator, GramSystem,
    HermitianToeplitzCov,
};
pub use error::{Error, Result};
pub use hilbert::{AngularFunction, SupportSet, Trig};
pub use numerics::{bessel_j0, integrate, pinv_psd, PinvSpec, QuadratureSpec};
