//! Numeric tolerances used across evaluation, solvers and checks.
//!
//! None of these constants come from the underlying theory; they are
//! implementation choices kept in one place so experiments can cite them.

/// Maximum deviation of a transition-matrix row sum from one.
pub const ROW_SUM: f64 = 1e-12;

/// Linear-system residual bound, scaled by `1 + |x|_inf` of the solution.
pub const RESIDUAL: f64 = 1e-9;

/// Tolerance for comparing two solved quantities, scaled by `1 + |a|`.
pub const COMPARE: f64 = 1e-9;

/// Two objective values within this (scaled) distance are co-optimal.
pub const OPTIMUM: f64 = 1e-9;

/// Bound on the path-decomposition reconstruction error.
pub const DECOMPOSITION: f64 = 1e-8;

/// Stationarity residual `|pi Q - pi|_inf`.
pub const STATIONARY: f64 = 1e-12;

/// Default sup-norm stopping threshold for value iteration.
pub const VALUE_ITERATION: f64 = 1e-10;

/// Scaled tolerance around `x`.
#[inline]
pub fn scaled(tol: f64, x: f64) -> f64 {
    tol * (1.0 + x.abs())
}

/// `a` and `b` agree within [`COMPARE`] scaled by the larger magnitude.
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= scaled(COMPARE, a.abs().max(b.abs()))
}
