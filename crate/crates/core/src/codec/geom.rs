//! The law of the match index: geometric, truncated at the cap.
//!
//! Conditional on the source block, each scanned word lands in the ball
//! independently with the ball probability `p`, so the index is geometric;
//! the cap folds all later indices into the sentinel `cap + 1`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometric distribution on `1..=cap` with the residual tail mass placed
/// on `cap + 1`. Total mass is exactly one: `(1 - q^cap) + q^cap`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedGeometric<S: Scalar> {
    p: S,
    cap: u64,
}

impl<S: Scalar> TruncatedGeometric<S> {
    pub fn new(p: S, cap: u64) -> Result<Self> {
        if !(p > S::zero() && p <= S::one()) {
            return Err(Error::domain(format!(
                "success probability must lie in (0, 1], got {p}"
            )));
        }
        if cap == 0 {
            return Err(Error::domain("the index cap must be at least 1"));
        }
        Ok(TruncatedGeometric { p, cap })
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// Mass at index `k`: `p (1-p)^(k-1)` up to the cap, the whole tail at
    /// `cap + 1`, zero elsewhere.
    pub fn mass(&self, k: u64) -> S {
        let q = S::one() - self.p;
        if k == 0 {
            S::zero()
        } else if k <= self.cap {
            self.p * q.powf(S::of_usize((k - 1) as usize))
        } else if k == self.cap.saturating_add(1) {
            q.powf(S::of_usize(self.cap as usize))
        } else {
            S::zero()
        }
    }

    /// Entropy in bits, the finite sum in closed form.
    pub fn entropy_bits(&self) -> S {
        truncated_geometric_entropy(self.p, self.cap).expect("constructor validated the law")
    }
}

/// Entropy in bits of the geometric law truncated at `cap`.
///
/// Writing `q = 1 - p` and `c = cap`, the sum over `1..=c` plus the tail
/// atom collapses to
/// `-(1 - q^c) log p - (q/p)(1 - c q^(c-1) + (c-1) q^c) log q - c q^c log q`.
pub fn truncated_geometric_entropy<S: Scalar>(p: S, cap: u64) -> Result<S> {
    if !(p > S::zero() && p <= S::one()) {
        return Err(Error::domain(format!(
            "success probability must lie in (0, 1], got {p}"
        )));
    }
    if cap == 0 {
        return Err(Error::domain("the index cap must be at least 1"));
    }
    let q = S::one() - p;
    if q == S::zero() {
        return Ok(S::zero());
    }
    let c = S::of(cap as f64);
    // q^c and c q^(c-1) through logs; both underflow cleanly to zero.
    let ln_q = q.ln();
    let q_c = (c * ln_q).exp();
    let cq_c1 = ((c - S::one()) * ln_q + c.ln()).exp();
    let mean_exceedances = q * (S::one() - cq_c1 + (c - S::one()) * q_c) / p;
    let h_nats = -(S::one() - q_c) * p.ln() - mean_exceedances * ln_q - c * q_c * ln_q;
    Ok(h_nats / S::LN_2())
}

/// Entropy ceiling for any mixture of truncated geometrics whose success
/// probabilities all sit at or above `alpha`: `log2(e / alpha)` bits.
pub fn mixture_entropy_bound<S: Scalar>(alpha: S) -> Result<S> {
    if !(alpha > S::zero() && alpha <= S::one()) {
        return Err(Error::domain(format!(
            "the probability floor must lie in (0, 1], got {alpha}"
        )));
    }
    Ok((S::E() / alpha).log2())
}
