//! Counter-based random number streams.
//!
//! Reproducibility contract: a `(seed, purpose, stream index)` triple fully
//! determines every sample drawn from that stream, independent of thread
//! scheduling and of how many other streams exist. Codebooks exploit this by
//! assigning stream `i` to codeword `i`, so word `i` can be regenerated in
//! isolation.
//!
//! All derived samplers consume a fixed number of raw `u64` draws per sample
//! (uniforms: 1, normals: 2), so sample positions within a stream are
//! predictable as well.

use crate::scalar::Scalar;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Factory for independent, reproducible random streams.
///
/// The 256-bit ChaCha key is derived from a user seed and a purpose label so
/// that distinct uses (codebook words, Monte Carlo trials, source samples)
/// never share a stream even under the same seed.
#[derive(Debug, Clone)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    /// Derives a stream family from a seed and a purpose label.
    pub fn new(seed: u64, purpose: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update([0u8]);
        h.update(purpose.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        StreamFamily { key }
    }

    /// Opens stream `index`. Streams with distinct indices are independent.
    pub fn stream(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Uniform draw in the half-open interval `[0, 1)` with 53-bit resolution.
pub fn uniform_half_open<S: Scalar>(rng: &mut impl RngCore) -> S {
    let bits = rng.next_u64() >> 11;
    S::of(bits as f64 * (1.0 / 9_007_199_254_740_992.0))
}

/// Uniform draw in the open-closed interval `(0, 1]`, safe to pass to `ln`.
pub fn uniform_open_closed<S: Scalar>(rng: &mut impl RngCore) -> S {
    let bits = (rng.next_u64() >> 11) + 1;
    S::of(bits as f64 * (1.0 / 9_007_199_254_740_992.0))
}

/// Standard normal draw via the Box-Muller transform.
///
/// Consumes exactly two raw `u64`s. The `ln` argument lies in `(0, 1]`, so
/// the result is always finite.
pub fn standard_normal<S: Scalar>(rng: &mut impl RngCore) -> S {
    let u1: f64 = uniform_open_closed(rng);
    let u2: f64 = uniform_half_open(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    S::of(r * (std::f64::consts::TAU * u2).cos())
}

/// Exact sampler for a finite distribution via 64-bit fixed-point thresholds.
///
/// Cumulative probabilities are rounded once to integers out of 2^64; a
/// sample is a single raw `u64` compared against the thresholds. Letters of
/// probability zero are never produced, and the thresholds always end at
/// exactly 2^64 so every draw maps to a letter.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    /// Ascending, final entry is exactly 2^64.
    thresholds: Vec<u128>,
}

impl CumulativeTable {
    /// Builds the table from probabilities that sum to 1 (to tolerance).
    /// Validation of the vector itself is the caller's responsibility.
    pub fn new<S: Scalar>(probs: &[S]) -> Self {
        const FULL: u128 = 1 << 64;
        let mut thresholds = Vec::with_capacity(probs.len());
        let mut cdf = 0.0_f64;
        let mut prev: u128 = 0;
        for &p in probs {
            cdf += p.as_f64();
            let t = ((cdf * FULL as f64).round() as u128).clamp(prev, FULL);
            thresholds.push(t);
            prev = t;
        }
        if let Some(last) = thresholds.last_mut() {
            *last = FULL;
        }
        CumulativeTable { thresholds }
    }

    /// Draws one letter index. Consumes exactly one raw `u64`.
    pub fn sample(&self, rng: &mut impl RngCore) -> usize {
        let x = rng.next_u64() as u128;
        // partition_point: first threshold strictly above x.
        self.thresholds.partition_point(|&t| t <= x)
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_independent() {
        let fam = StreamFamily::new(17, "codebook");
        let a: Vec<u64> = {
            let mut r = fam.stream(3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = fam.stream(3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b, "same (seed, purpose, stream) must replay identically");

        let c: Vec<u64> = {
            let mut r = fam.stream(4);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, c, "distinct streams must differ");

        let d: Vec<u64> = {
            let mut r = StreamFamily::new(17, "trials").stream(3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, d, "distinct purposes must differ");
    }

    #[test]
    fn uniform_ranges_are_respected() {
        let fam = StreamFamily::new(1, "u");
        let mut rng = fam.stream(0);
        for _ in 0..10_000 {
            let x: f64 = uniform_half_open(&mut rng);
            assert!((0.0..1.0).contains(&x));
            let y: f64 = uniform_open_closed(&mut rng);
            assert!(y > 0.0 && y <= 1.0);
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let fam = StreamFamily::new(2, "n");
        let mut rng = fam.stream(0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0_f64, 0.0_f64);
        for _ in 0..n {
            let z: f64 = standard_normal(&mut rng);
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "sample mean {mean} too far from 0");
        assert!((var - 1.0).abs() < 0.02, "sample variance {var} too far from 1");
    }

    #[test]
    fn cumulative_table_handles_zero_mass_letters() {
        let table = CumulativeTable::new(&[0.0_f64, 1.0, 0.0]);
        let fam = StreamFamily::new(3, "t");
        let mut rng = fam.stream(0);
        for _ in 0..1000 {
            assert_eq!(table.sample(&mut rng), 1);
        }
    }

    #[test]
    fn cumulative_table_frequencies_match() {
        let probs = [0.2_f64, 0.5, 0.3];
        let table = CumulativeTable::new(&probs);
        let fam = StreamFamily::new(4, "t");
        let mut rng = fam.stream(0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[table.sample(&mut rng)] += 1;
        }
        for (k, &p) in probs.iter().enumerate() {
            let f = counts[k] as f64 / n as f64;
            assert!((f - p).abs() < 0.01, "letter {k}: freq {f} vs prob {p}");
        }
    }
}
