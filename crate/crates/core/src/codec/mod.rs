//! Random-codebook coding: lazy word generation, first-match search with
//! truncation, and the naive index description length.
//!
//! A codebook is an infinite i.i.d. sequence of words; word `i` is a pure
//! function of `(seed, i)`, so nothing is stored and concurrent scans see
//! identical words. The search transmits the first index whose word lands
//! within the distortion ball, or a truncation marker once the index would
//! no longer fit the bit budget `n * b`.

pub mod bits;
pub mod geom;
pub mod stats;
pub mod wqc;

use crate::distortion::Distortion;
use crate::distributions::CodebookLaw;
use crate::error::{guard_size, Error, Result};
use crate::rng::StreamFamily;
use crate::scalar::Scalar;
use bits::elias_length;
use wqc::ScalarQuantizerWQC;

/// Default ceiling on per-trial word comparisons.
pub const DEFAULT_SEARCH_BUDGET: u64 = 1 << 26;

/// Attained distortion within this absolute distance of the target flags a
/// boundary match.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Word-scan audit is exact but linear in `n * index`; refuse beyond this.
const AUDIT_GUARD: u128 = 10_000_000;

/// Infinite i.i.d. codebook addressed by word index `i >= 1`.
///
/// Regenerating a word with the same `(seed, n, law)` yields identical
/// letters regardless of access order: each index owns a dedicated RNG
/// stream.
#[derive(Debug, Clone)]
pub struct Codebook<S: Scalar> {
    n: usize,
    law: CodebookLaw<S>,
    seed: u64,
    family: StreamFamily,
}

impl<S: Scalar> Codebook<S> {
    pub fn new(n: usize, law: CodebookLaw<S>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::model("block length must be at least 1"));
        }
        Ok(Codebook {
            n,
            law,
            seed,
            family: StreamFamily::new(seed, "codebook-words"),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn law(&self) -> &CodebookLaw<S> {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Word `i`, regenerated from scratch.
    pub fn word(&self, index: u64) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(self.n);
        self.write_word(index, &mut out)?;
        Ok(out)
    }

    /// Word `i` written into a reused buffer; scan loops avoid reallocating.
    pub fn write_word(&self, index: u64, out: &mut Vec<S>) -> Result<()> {
        if index == 0 {
            return Err(Error::domain("word indices start at 1"));
        }
        let mut rng = self.family.stream(index);
        out.clear();
        for _ in 0..self.n {
            out.push(self.law.sample(&mut rng));
        }
        Ok(())
    }
}

/// Everything one search produces: the transmitted index, how it ended,
/// and the matched word for downstream statistics.
#[derive(Debug, Clone)]
pub struct MatchTrace<S: Scalar> {
    pub n: usize,
    /// Transmitted index: the first matching position, or `cap + 1` after
    /// truncation at `cap = floor(2^(n b))`.
    pub index: u64,
    pub truncated: bool,
    /// Truncation exponent in bits per symbol.
    pub b: S,
    /// Elias code length of `index`; the entire description when the trace
    /// is not truncated.
    pub index_bits: usize,
    /// Mean distortion attained by the matched word.
    pub attained: Option<S>,
    /// True when the attained distortion sits within `BOUNDARY_TOL` of the
    /// target level.
    pub boundary: bool,
    /// The matched word.
    pub word: Option<Vec<S>>,
}

impl<S: Scalar> MatchTrace<S> {
    /// Empirical distribution of the matched word over the given letters,
    /// as a probability vector aligned with `letters`.
    pub fn letter_histogram(&self, letters: &[S]) -> Result<Vec<S>> {
        let word = self
            .word
            .as_ref()
            .ok_or_else(|| Error::domain("a truncated trace carries no matched word"))?;
        let mut counts = vec![S::zero(); letters.len()];
        let weight = S::one() / S::of_usize(word.len());
        for &y in word {
            let slot = letters
                .iter()
                .position(|&a| a == y)
                .ok_or_else(|| Error::domain(format!("word letter {y} not in the alphabet")))?;
            counts[slot] += weight;
        }
        Ok(counts)
    }
}

/// Truncation cap `floor(2^(n b))`, saturating at `u64::MAX`.
pub fn index_cap<S: Scalar>(n: usize, b: S) -> u64 {
    let exponent = S::of_usize(n).as_f64() * b.as_f64();
    if exponent >= 63.0 {
        u64::MAX
    } else {
        2f64.powf(exponent).floor() as u64
    }
}

/// Scans the codebook for the first word within mean distortion `level` of
/// `x_block`, stopping at `floor(2^(n b))`.
///
/// A scan that reaches the cap is a legitimate truncation; a scan that
/// would exceed `budget` before reaching the cap is a resource failure.
pub fn first_match<S: Scalar>(
    x_block: &[S],
    codebook: &Codebook<S>,
    distortion: &Distortion<S>,
    level: S,
    b: S,
    budget: u64,
) -> Result<MatchTrace<S>> {
    let n = codebook.n();
    if x_block.len() != n {
        return Err(Error::model(format!(
            "source block length {} does not match the codebook length {n}",
            x_block.len()
        )));
    }
    if !(b > S::zero()) || !b.is_finite() {
        return Err(Error::domain(format!(
            "truncation exponent must be positive, got {b}"
        )));
    }
    if !level.is_finite() {
        return Err(Error::domain("target level must be finite"));
    }
    let cap = index_cap(n, b);
    let limit = cap.min(budget);
    let mut word = Vec::with_capacity(n);
    let mut index = 1u64;
    while index <= limit {
        codebook.write_word(index, &mut word)?;
        let attained = distortion.rho_n(x_block, &word)?;
        if attained <= level {
            let boundary = (attained - level).abs().as_f64() <= BOUNDARY_TOL;
            return Ok(MatchTrace {
                n,
                index,
                truncated: false,
                b,
                index_bits: elias_length(index),
                attained: Some(attained),
                boundary,
                word: Some(word),
            });
        }
        index += 1;
    }
    if cap > budget {
        return Err(Error::Budget(format!(
            "no match within the {budget}-word search budget; the truncation cap is {cap}"
        )));
    }
    let sentinel = cap.saturating_add(1);
    Ok(MatchTrace {
        n,
        index: sentinel,
        truncated: true,
        b,
        index_bits: elias_length(sentinel),
        attained: None,
        boundary: false,
        word: None,
    })
}

/// Total description length in bits: the Elias code of the index, plus the
/// per-symbol quantizer fallback when the search was truncated.
pub fn naive_code_length<S: Scalar>(
    trace: &MatchTrace<S>,
    fallback: &ScalarQuantizerWQC<S>,
    x_block: &[S],
) -> Result<S> {
    if x_block.len() != trace.n {
        return Err(Error::model(format!(
            "block length {} does not match the trace length {}",
            x_block.len(),
            trace.n
        )));
    }
    let mut total = S::of_usize(trace.index_bits);
    if trace.truncated {
        for &x in x_block {
            total += fallback.code_length_bits(x)?;
        }
    }
    Ok(total)
}

/// Re-derives every scanned word of a non-truncated trace and checks the
/// match claim: word `index` is inside the ball, all earlier words outside.
pub fn audit_first_match<S: Scalar>(
    trace: &MatchTrace<S>,
    x_block: &[S],
    codebook: &Codebook<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<()> {
    if trace.truncated {
        return Err(Error::domain("only a non-truncated trace can be audited"));
    }
    guard_size(
        "first-match audit",
        trace.n as u128 * trace.index as u128,
        AUDIT_GUARD,
    )?;
    let mut word = Vec::with_capacity(trace.n);
    for i in 1..=trace.index {
        codebook.write_word(i, &mut word)?;
        let inside = distortion.in_ball(x_block, &word, level)?;
        if i < trace.index && inside {
            return Err(Error::numerical(format!(
                "word {i} already lies in the ball but the trace points at {}",
                trace.index
            )));
        }
        if i == trace.index && !inside {
            return Err(Error::numerical(format!(
                "matched word {i} is outside the ball on re-check"
            )));
        }
    }
    Ok(())
}
