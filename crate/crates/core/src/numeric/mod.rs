//! Shared numerical building blocks: adaptive quadrature, bracketed root
//! finding, log-domain helpers, and the special functions needed for
//! goodness-of-fit p-values.

pub mod quad;
pub mod root;
pub mod special;

use crate::scalar::Scalar;

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add<S: Scalar>(a: S, b: S) -> S {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == S::neg_infinity() {
        return S::neg_infinity();
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum_i exp(x_i))` without overflow; `-inf` for an empty slice.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let hi = xs.iter().cloned().fold(S::neg_infinity(), S::max);
    if hi == S::neg_infinity() {
        return S::neg_infinity();
    }
    let sum: S = xs.iter().map(|&x| (x - hi).exp()).sum();
    hi + sum.ln()
}
