use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Solve `f(a) = target` for `a ≥ 0` where `f` is strictly increasing on
/// ℝ≥0 with `f(0) ≤ target`.
///
/// The bracket starts at `[0, 1]` and doubles until it contains the root;
/// bisection then runs to an absolute width of `tol` (at most 200 halvings
/// in total). Returns `+∞` if `f` stays below `target` on every bracket.
pub fn invert_increasing(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::param("target", "must be finite"));
    }
    if f(0.0) >= target {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iters = 0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        iters += 1;
        if iters >= MAX_ITER || !hi.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > tol && iters < MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok(0.5 * (lo + hi))
}
