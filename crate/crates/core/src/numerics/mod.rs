//! Numerical primitives shared by every other module.

pub(crate) mod bessel;
mod pinv;
mod quadrature;

pub use bessel::bessel_j0;
pub use pinv::{pinv_nested, pinv_psd, pinv_psd_floor, NestedFactors, Pinv, PinvSpec};
pub use quadrature::{gauss_legendre_rule, integrate, integrate_breaks, Integral, QuadratureSpec};
