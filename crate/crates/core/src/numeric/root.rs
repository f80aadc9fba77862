//! Bracketed scalar root finding.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `f(x) = 0` on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of
/// opposite sign (either may be zero). Bisection interleaved with secant
/// steps; terminates when `|f(x)| <= ftol` or the bracket collapses to
/// machine width, whichever comes first.
pub fn bracketed_root<S: Scalar>(
    f: impl Fn(S) -> S,
    mut lo: S,
    mut hi: S,
    ftol: S,
) -> Result<S> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo.abs() <= ftol {
        return Ok(lo);
    }
    if fhi.abs() <= ftol {
        return Ok(hi);
    }
    if (flo > S::zero()) == (fhi > S::zero()) {
        return Err(Error::numerical(format!(
            "root not bracketed: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    let two = S::of(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        // Try one secant step first; fall back to the midpoint when it
        // leaves the bracket or makes no progress.
        let mut x = mid;
        let denom = fhi - flo;
        if denom != S::zero() {
            let sec = lo - flo * (hi - lo) / denom;
            if sec > lo && sec < hi {
                x = sec;
            }
        }
        let fx = f(x);
        if fx.abs() <= ftol || x == lo || x == hi {
            return Ok(x);
        }
        if (fx > S::zero()) == (flo > S::zero()) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        // Guard against secant stalling on one side: cut with plain
        // bisection whenever the bracket is still wide.
        let mid = (lo + hi) / two;
        if mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm.abs() <= ftol {
            return Ok(mid);
        }
        if (fm > S::zero()) == (flo > S::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Err(Error::numerical(
        "root finder failed to reach tolerance within iteration cap",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_root_of_two() {
        let r = bracketed_root(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn accepts_endpoint_roots() {
        let r = bracketed_root(|x: f64| x, 0.0, 1.0, 1e-14).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rejects_unbracketed_input() {
        assert!(bracketed_root(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn handles_steep_monotone_functions() {
        let f = |x: f64| (50.0 * (x - 0.3)).exp() - 1.0;
        let r = bracketed_root(f, -4.0, 4.0, 1e-12).unwrap();
        assert!((r - 0.3).abs() < 1e-10, "got {r}");
    }
}
