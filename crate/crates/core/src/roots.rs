//! Scalar bracketing root finders and a golden-section maximiser.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn opposite_signs(a: f64, b: f64) -> bool {
    (a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0)
}

/// Bisection on `[lo, hi]`, which must bracket a sign change of `f`.
///
/// Iterates until the bracket is narrower than `x_tol` *and* the residual is
/// below `f_tol`, or until the midpoint is no longer representable between
/// the endpoints. Returns the endpoint with the smaller residual.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !opposite_signs(f_lo, f_hi) || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::Internal(format!(
            "bisection bracket [{lo}, {hi}] does not enclose a sign change ({f_lo}, {f_hi})"
        )));
    }
    let mut best = if f_lo.abs() < f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for _ in 0..400 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if opposite_signs(f_lo, f_mid) {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
        if hi - lo < x_tol && best.1.abs() < f_tol {
            break;
        }
    }
    Ok(best.0)
}

/// Bisection on a monotone predicate: `pred(lo)` is true, `pred(hi)` false;
/// returns the last point known to satisfy it once the bracket is below `tol`.
pub fn bisect_predicate<P>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    P: Fn(f64) -> bool,
{
    while hi - lo > tol {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`, with the endpoints included as candidates.
pub fn golden_max<F>(f: F, a: f64, b: f64, iterations: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}
