//! Bessel function of the first kind, order zero.
//!
//! Three branches on `|x|`:
//!
//! * `|x| <= 8`: power series `sum (-1)^m (x/2)^(2m) / (m!)^2`. The largest term
//!   is about 113, so cancellation costs at most two digits.
//! * `8 < |x| < 25`: Miller backward recurrence normalised by
//!   `J0 + 2 * sum J_2k = 1`.
//! * `|x| >= 25`: Hankel asymptotic expansion, summed until the terms stop
//!   shrinking. The smallest term there is below `exp(-2|x|)`.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 25.0;

/// `J0(x)` with absolute error below `1e-12` for `|x| <= 500`.
///
/// Returns [`Error::Domain`] for NaN or infinite input.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j0 requires a finite argument, got {x}")));
    }
    Ok(j0(x))
}

/// Unchecked `J0` for arguments already known to be finite.
pub(crate) fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_LIMIT {
        series(ax)
    } else if ax < ASYMPTOTIC_LIMIT {
        miller(ax)
    } else {
        hankel(ax)
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 1.0;
    loop {
        term *= -q / (m * m);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-3) {
            break;
        }
        m += 1.0;
    }
    sum
}

fn miller(x: f64) -> f64 {
    let start = 2 * (((x + 45.0) / 2.0).ceil() as usize);
    let mut next = 0.0_f64;
    let mut cur = 1e-30_f64;
    let mut norm = 0.0_f64;
    // cur holds J_k, next holds J_{k+1} (both unnormalised)
    for k in (1..=start).rev() {
        let prev = (2.0 * k as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        // cur is now J_{k-1}
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
        }
    }
    cur / (norm + cur)
}

fn hankel(x: f64) -> f64 {
    // t_k = a_k(0) / x^k with a_k(0) = prod_{j<=k} (-(2j-1)^2) / (k! 8^k)
    let mut p = 1.0;
    let mut q = 0.0;
    let mut t = 1.0_f64;
    let mut k = 1usize;
    let mut last = f64::INFINITY;
    loop {
        let odd = (2 * k - 1) as f64;
        t *= -(odd * odd) / (8.0 * k as f64 * x);
        if t.abs() >= last || t.abs() < 1e-18 {
            break;
        }
        last = t.abs();
        // P = t0 - t2 + t4 - ..., Q = t1 - t3 + t5 - ...
        let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        if k.is_multiple_of(2) {
            p += sign * t;
        } else {
            q += sign * t;
        }
        k += 1;
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
