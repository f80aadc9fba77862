//! Adaptive Simpson quadrature with an absolute error target.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maximum bisection depth before giving up on the tolerance.
const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Classic adaptive Simpson with Richardson extrapolation; the local
/// acceptance test is the usual `|S_fine - S_coarse| <= 15 tol_local`.
/// Integrands must be finite on the whole interval.
pub fn adaptive_simpson<S: Scalar>(f: impl Fn(S) -> S, a: S, b: S, tol: S) -> Result<S> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::numerical("quadrature interval must be finite"));
    }
    if a == b {
        return Ok(S::zero());
    }
    let two = S::of(2.0);
    let m = (a + b) / two;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integrates over a union of adjacent intervals split at `points`, which
/// must be strictly increasing. Use to isolate kinks (e.g. a density with a
/// corner) so the adaptive rule sees smooth pieces only.
pub fn adaptive_simpson_segments<S: Scalar>(
    f: impl Fn(S) -> S,
    points: &[S],
    tol: S,
) -> Result<S> {
    if points.len() < 2 {
        return Err(Error::numerical("need at least two segment endpoints"));
    }
    let pieces = S::of_usize(points.len() - 1);
    let mut total = S::zero();
    for w in points.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::numerical("segment endpoints must be increasing"));
        }
        total += adaptive_simpson(&f, w[0], w[1], tol / pieces)?;
    }
    Ok(total)
}

fn simpson<S: Scalar>(a: S, b: S, fa: S, fm: S, fb: S) -> S {
    (b - a) / S::of(6.0) * (fa + S::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn step<S: Scalar>(
    f: &impl Fn(S) -> S,
    a: S,
    b: S,
    fa: S,
    fm: S,
    fb: S,
    whole: S,
    tol: S,
    depth: u32,
) -> Result<S> {
    let two = S::of(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let (flm, frm) = (f(lm), f(rm));
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::numerical("integrand evaluated to a non-finite value"));
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= S::of(15.0) * tol || m == a || m == b {
        return Ok(left + right + delta / S::of(15.0));
    }
    if depth == 0 {
        return Err(Error::numerical(
            "adaptive quadrature exhausted its depth before reaching tolerance",
        ));
    }
    let half_tol = tol / two;
    let l = step(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?;
    let r = step(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = adaptive_simpson(|x: f64| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_standard_normal_density() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = adaptive_simpson(phi, -10.0, 10.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn segments_handle_a_kink() {
        // Laplace density with scale 1, kinked at 0; mass over [-40, 40].
        let lap = |x: f64| 0.5 * (-x.abs()).exp();
        let v = adaptive_simpson_segments(lap, &[-40.0, 0.0, 40.0], 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11, "got {v}");
    }

    #[test]
    fn oscillatory_integral_matches() {
        // integral of sin over [0, pi] is exactly 2.
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }
}
