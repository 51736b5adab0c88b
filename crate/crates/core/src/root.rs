//! Bisection-safeguarded Newton iteration for strictly increasing functions.
//!
//! Every root solved in this crate (the tilt `τ(ε)`, the saddlepoint `θ_n`,
//! the level-crossing decay exponent) is the zero of a smooth strictly
//! increasing function, so a shrinking sign-change bracket plus Newton steps
//! inside it converges fast and cannot escape.

use crate::error::{Error, Result};
use crate::real::Real;

/// Iteration cap for all root solves.
pub const MAX_ITER: usize = 100;

/// Default number of geometric bracket expansions before giving up.
pub const MAX_DOUBLINGS: usize = 10;

/// Expand `hi` geometrically until `f(hi) >= 0`, given `f(lo) <= 0`.
///
/// Returns the bracket `(lo, hi)` or an error after `max_doublings`
/// expansions without a sign change.
pub fn bracket_increasing<T: Real>(
    f: &mut impl FnMut(T) -> T,
    lo: T,
    hi0: T,
    max_doublings: usize,
) -> Result<(T, T)> {
    let mut hi = hi0;
    for _ in 0..=max_doublings {
        let fh = f(hi);
        if !fh.is_finite() {
            return Err(Error::RootNotBracketed(format!(
                "function not finite at upper bracket endpoint {hi}"
            )));
        }
        if fh >= T::zero() {
            return Ok((lo, hi));
        }
        hi = hi * T::lit(2.0);
    }
    Err(Error::RootNotBracketed(format!(
        "no sign change up to {hi} after {max_doublings} expansions"
    )))
}

/// Solve `f(x) = 0` for strictly increasing `f` with `f(lo) <= 0 <= f(hi)`.
///
/// Newton steps from `x0` are accepted while they stay inside the current
/// sign-change bracket; otherwise the step bisects. Converges when
/// `|f(x)| <= f_tol`.
pub fn solve_increasing<T: Real>(
    f: &mut impl FnMut(T) -> T,
    df: &mut impl FnMut(T) -> T,
    lo0: T,
    hi0: T,
    x0: T,
    f_tol: T,
) -> Result<T> {
    let (mut lo, mut hi) = (lo0, hi0);
    let mut x = if x0 > lo && x0 < hi {
        x0
    } else {
        (lo + hi) * T::lit(0.5)
    };
    for _ in 0..MAX_ITER {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::SolverFailed(format!("f({x}) is not finite")));
        }
        if fx.abs() <= f_tol {
            return Ok(x);
        }
        if fx > T::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > T::zero() && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * T::lit(0.5)
        };
        // A collapsed bracket means the root is resolved to machine
        // precision even if the residual tolerance is unreachable.
        if hi - lo <= T::epsilon() * (T::one() + lo.abs() + hi.abs()) {
            return Ok(x);
        }
    }
    Err(Error::SolverFailed(format!(
        "no convergence in {MAX_ITER} iterations, bracket [{lo}, {hi}]"
    )))
}
