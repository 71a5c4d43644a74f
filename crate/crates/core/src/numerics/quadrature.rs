//! Adaptive composite Gauss-Legendre quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Controls for [`integrate`].
///
/// `max_subdivisions` bounds the bisection depth of any single panel, so a
/// panel is never narrower than `(b - a) / 2^max_subdivisions`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub panel_order: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panel_order: 32, abs_tol: 1e-11, rel_tol: 1e-11, max_subdivisions: 20 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panel_order < 2 {
            return Err(Error::Validation(format!("quadrature panel_order must be >= 2, got {}", self.panel_order)));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Validation(format!(
                "quadrature tolerances must be positive, got abs_tol={} rel_tol={}",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Validation("quadrature max_subdivisions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of a quadrature. `converged == false` means some panel hit the depth
/// limit before meeting its tolerance; `value` is then a best effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

impl Integral {
    pub const ZERO: Integral = Integral { value: 0.0, error_estimate: 0.0, converged: true };

    pub fn combine(self, other: Integral) -> Integral {
        Integral {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            converged: self.converged && other.converged,
        }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes in increasing order.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_rule(n);
        Self { nodes, weights }
    }

    /// Returns `(integral of f, integral of |f|)` over `[a, b]`.
    fn apply<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        let mut sa = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            s += w * v;
            sa += w * v.abs();
        }
        (s * half, sa * half)
    }
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)`.
///
/// Non-convergence is reported through [`Integral::converged`], not as an
/// error. `a > b` or a malformed spec is a contract error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral> {
    integrate_breaks(f, &[a, b], spec)
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, placing a panel boundary
/// at every break. Breaks must be non-decreasing; empty pieces are skipped.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, breaks: &[f64], spec: &QuadratureSpec) -> Result<Integral> {
    spec.validate().map_err(|e| Error::Contract(e.to_string()))?;
    if breaks.len() < 2 {
        return Err(Error::Contract("integration needs at least two break points".into()));
    }
    if breaks.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("integration limits must be finite".into()));
    }
    if breaks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract(format!("integration limits must be ordered, got {:?}", breaks)));
    }
    let total_width = breaks[breaks.len() - 1] - breaks[0];
    if total_width == 0.0 {
        return Ok(Integral::ZERO);
    }
    let rule = Rule::new(spec.panel_order);

    let pieces: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, va) = rule.apply(&f, w[0], w[1]);
            (w[0], w[1], v, va)
        })
        .collect();
    let estimate: f64 = pieces.iter().map(|p| p.2).sum();
    let tol = spec.abs_tol.max(spec.rel_tol * estimate.abs());
    let density = tol / total_width;

    let mut out = Integral::ZERO;
    for (a, b, coarse, coarse_abs) in pieces {
        out = out.combine(adapt(&f, &rule, a, b, coarse, coarse_abs, density, 0, spec));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    rule: &Rule,
    a: f64,
    b: f64,
    coarse: f64,
    coarse_abs: f64,
    density: f64,
    depth: usize,
    spec: &QuadratureSpec,
) -> Integral {
    let m = 0.5 * (a + b);
    let (l, la) = rule.apply(f, a, m);
    let (r, ra) = rule.apply(f, m, b);
    let fine = l + r;
    let err = (fine - coarse).abs();
    let roundoff = 64.0 * f64::EPSILON * coarse_abs.max(la + ra);
    if err <= density * (b - a) || err <= roundoff {
        return Integral { value: fine, error_estimate: err, converged: true };
    }
    if depth + 1 >= spec.max_subdivisions || m <= a || m >= b {
        return Integral { value: fine, error_estimate: err, converged: false };
    }
    adapt(f, rule, a, m, l, la, density, depth + 1, spec).combine(adapt(f, rule, m, b, r, ra, density, depth + 1, spec))
}
