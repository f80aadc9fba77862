//! Measured statistics of the match index and the matched word: plug-in
//! index entropy with bias correction, the averaged matched-word law, and
//! ball-probability estimates.

use std::collections::HashMap;

use super::bits::elias_length;
use super::wqc::ScalarQuantizerWQC;
use super::{first_match, index_cap, Codebook, DEFAULT_SEARCH_BUDGET};
use crate::distortion::Distortion;
use crate::distributions::{CodebookLaw, DiscreteDistribution, SourceModel};
use crate::error::{guard_size, Error, Result};
use crate::oracle::brute_ball_prob;
use crate::ratefn::{rate_pqd, QStar};
use crate::rng::{uniform_half_open, StreamFamily};
use crate::scalar::Scalar;

/// Ceiling on `cap * distinct_blocks` for the shared index scan; actual
/// work sits far below the product because typical blocks match early.
const SCAN_GUARD: u128 = 50_000_000_000;

/// Ceiling on the lattice ball table, positions times budget cells.
const LATTICE_GUARD: u128 = 20_000_000;

/// Histogram bins for matched-word comparisons against a continuous law.
const TYPE_BINS: usize = 64;

/// Plug-in index entropy for one fixed codebook realization, with bias
/// correction, resampling error, and the description-length averages that
/// ride along for free.
#[derive(Debug, Clone)]
pub struct EntropyEstimate<S: Scalar> {
    pub n: usize,
    pub trials: usize,
    /// Seed of the fixed codebook the estimate conditions on.
    pub seed: u64,
    /// Raw plug-in entropy of the empirical index law, bits per symbol.
    pub plug_in_bits: S,
    /// Plug-in value plus the Miller-Madow bias correction.
    pub miller_madow_bits: S,
    /// Delete-one jackknife standard error of the plug-in value.
    pub std_error_bits: S,
    /// Distinct transmitted indices observed.
    pub distinct: usize,
    pub truncated_trials: usize,
    /// Mean Elias length of the transmitted index, bits per symbol.
    pub mean_index_bits: S,
    /// Mean full description length, bits per symbol, when a fallback
    /// quantizer was supplied for the truncated trials.
    pub mean_naive_bits: Option<S>,
}

/// Estimates the entropy of the transmitted index under one codebook.
///
/// Draws `trials` source blocks, finds each block's index against the
/// fixed codebook, and reports the plug-in entropy of the empirical index
/// law per symbol. Blocks repeat, and the index is a pure function of the
/// block, so the scan memoizes per distinct block and shares one pass over
/// the codebook across all of them; results are identical to independent
/// searches.
pub fn index_entropy_estimate<S: Scalar>(
    source: &SourceModel<S>,
    codebook: &Codebook<S>,
    distortion: &Distortion<S>,
    level: S,
    b: S,
    trials: usize,
    fallback: Option<&ScalarQuantizerWQC<S>>,
) -> Result<EntropyEstimate<S>> {
    let n = codebook.n();
    if trials < 1_000 {
        return Err(Error::domain(format!(
            "at least 1000 trials are needed for a stable estimate, got {trials}"
        )));
    }
    let exponent = S::of_usize(n).as_f64() * b.as_f64();
    if !(exponent > 0.0) || exponent > 26.0 + 1e-9 {
        return Err(Error::domain(format!(
            "index space 2^{exponent} is not samplable; keep n*b in (0, 26]"
        )));
    }
    let cap = index_cap(n, b);
    if cap > DEFAULT_SEARCH_BUDGET {
        return Err(Error::Budget(format!(
            "truncation cap {cap} exceeds the search budget {DEFAULT_SEARCH_BUDGET}"
        )));
    }

    // Draw all blocks and collapse to distinct ones with multiplicities.
    let fam = StreamFamily::new(codebook.seed(), "index-entropy-blocks");
    let mut slots: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut blocks: Vec<Vec<S>> = Vec::new();
    let mut multiplicity: Vec<u64> = Vec::new();
    for t in 0..trials {
        let mut rng = fam.stream(t as u64);
        let x = source.sample_block(n, &mut rng);
        let key: Vec<u64> = x.iter().map(|v| v.as_f64().to_bits()).collect();
        match slots.get(&key) {
            Some(&slot) => multiplicity[slot] += 1,
            None => {
                slots.insert(key, blocks.len());
                blocks.push(x);
                multiplicity.push(1);
            }
        }
    }
    guard_size(
        "index-entropy scan",
        cap as u128 * blocks.len() as u128,
        SCAN_GUARD,
    )?;

    let index_of_block = scan_indices(codebook, distortion, level, cap, &blocks)?;

    // Empirical index law with multiplicities.
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut truncated_trials = 0usize;
    let mut index_bits_total = 0u128;
    let sentinel = cap.saturating_add(1);
    for (slot, &idx) in index_of_block.iter().enumerate() {
        *counts.entry(idx).or_insert(0) += multiplicity[slot];
        index_bits_total += elias_length(idx) as u128 * multiplicity[slot] as u128;
        if idx == sentinel {
            truncated_trials += multiplicity[slot] as usize;
        }
    }
    let t_real = S::of_usize(trials);
    let n_real = S::of_usize(n);

    // Plug-in entropy: log T - (1/T) sum c log c, in bits.
    let c_log_c: S = counts
        .values()
        .map(|&c| {
            let c = S::of(c as f64);
            c * c.log2()
        })
        .sum();
    let h_bits = (t_real.log2() - c_log_c / t_real).max(S::zero());
    let distinct = counts.len();
    let miller_madow =
        h_bits + S::of_usize(distinct.saturating_sub(1)) / (S::of(2.0) * t_real * S::LN_2());

    // Grouped delete-one jackknife: removing any of the c_v trials that
    // produced index v yields the same leave-one-out entropy.
    let t1 = t_real - S::one();
    let leave_out = |c: S| -> S {
        let reduced = c_log_c - c * c.log2()
            + if c > S::one() {
                (c - S::one()) * (c - S::one()).log2()
            } else {
                S::zero()
            };
        t1.log2() - reduced / t1
    };
    let mut jk_mean = S::zero();
    for (&_, &c) in &counts {
        jk_mean += S::of(c as f64) * leave_out(S::of(c as f64));
    }
    jk_mean /= t_real;
    let mut jk_var = S::zero();
    for (&_, &c) in &counts {
        let d = leave_out(S::of(c as f64)) - jk_mean;
        jk_var += S::of(c as f64) * d * d;
    }
    let se_bits = (t1 / t_real * jk_var).max(S::zero()).sqrt();

    let mean_index_bits = S::of(index_bits_total as f64) / (t_real * n_real);
    let mean_naive_bits = match fallback {
        None => None,
        Some(q) => {
            let mut extra = S::zero();
            for (slot, &idx) in index_of_block.iter().enumerate() {
                if idx == sentinel {
                    let mut per_block = S::zero();
                    for &x in &blocks[slot] {
                        per_block += q.code_length_bits(x)?;
                    }
                    extra += per_block * S::of(multiplicity[slot] as f64);
                }
            }
            Some(mean_index_bits + extra / (t_real * n_real))
        }
    };

    Ok(EntropyEstimate {
        n,
        trials,
        seed: codebook.seed(),
        plug_in_bits: h_bits / n_real,
        miller_madow_bits: miller_madow / n_real,
        std_error_bits: se_bits / n_real,
        distinct,
        truncated_trials,
        mean_index_bits,
        mean_naive_bits,
    })
}

/// One pass over the codebook assigning every distinct block its first
/// matching index, `cap + 1` if none arrives by the cap. Identical to
/// running `first_match` per block: same words, same membership test.
fn scan_indices<S: Scalar>(
    codebook: &Codebook<S>,
    distortion: &Distortion<S>,
    level: S,
    cap: u64,
    blocks: &[Vec<S>],
) -> Result<Vec<u64>> {
    let n = codebook.n();
    let n_real = S::of_usize(n);
    // Early exit on a partial sum is sound only for nonnegative costs; the
    // margin keeps borderline sums on the exact division path.
    let nonneg = !matches!(distortion, Distortion::Table(_));
    let exit_above = level * n_real * S::of(1.0 + 1e-12) + S::of(1e-300);
    let letters: Option<Vec<S>> = match codebook.law() {
        CodebookLaw::DiscretePmf(d) => Some(d.support().to_vec()),
        _ => None,
    };
    // For a discrete codebook, per-block cost tables make membership a sum
    // of lookups instead of distortion calls.
    let cost_rows: Option<Vec<Vec<S>>> = match &letters {
        None => None,
        Some(ls) => {
            let mut rows = Vec::with_capacity(blocks.len());
            for x in blocks {
                let mut row = Vec::with_capacity(n * ls.len());
                for &xi in x {
                    for &a in ls {
                        row.push(distortion.rho(xi, a)?);
                    }
                }
                rows.push(row);
            }
            Some(rows)
        }
    };

    let mut result = vec![cap.saturating_add(1); blocks.len()];
    let mut unmatched: Vec<usize> = (0..blocks.len()).collect();
    let mut word: Vec<S> = Vec::with_capacity(n);
    let mut word_slots: Vec<usize> = Vec::with_capacity(n);
    let mut index = 1u64;
    while !unmatched.is_empty() && index <= cap {
        codebook.write_word(index, &mut word)?;
        if let (Some(ls), Some(rows)) = (&letters, &cost_rows) {
            word_slots.clear();
            for &y in &word {
                let slot = ls
                    .iter()
                    .position(|&a| a == y)
                    .expect("codebook letters come from the law's support");
                word_slots.push(slot);
            }
            let width = ls.len();
            unmatched.retain(|&bi| {
                let row = &rows[bi];
                let mut total = S::zero();
                for (pos, &slot) in word_slots.iter().enumerate() {
                    total += row[pos * width + slot];
                    if nonneg && total > exit_above {
                        return true;
                    }
                }
                if total / n_real <= level {
                    result[bi] = index;
                    false
                } else {
                    true
                }
            });
        } else {
            let mut kept = Vec::with_capacity(unmatched.len());
            for &bi in &unmatched {
                let mut total = S::zero();
                let mut out = false;
                for (pos, &y) in word.iter().enumerate() {
                    total += distortion.rho(blocks[bi][pos], y)?;
                    if nonneg && total > exit_above {
                        out = true;
                        break;
                    }
                }
                if !out && total / n_real <= level {
                    result[bi] = index;
                } else {
                    kept.push(bi);
                }
            }
            unmatched = kept;
        }
        index += 1;
    }
    Ok(result)
}

/// Averaged empirical law of the matched word, with its distance to the
/// tilted output law.
#[derive(Debug, Clone)]
pub struct FavoriteTypeReport<S: Scalar> {
    pub n: usize,
    pub trials: usize,
    pub matched_trials: usize,
    pub truncated_trials: usize,
    /// Total variation to the tilted output law (discrete codebooks), or
    /// the bin-mass L1 distance over equal-probability bins (continuous).
    pub distance: S,
    /// Letters (discrete) or interior bin edges (continuous).
    pub support: Vec<S>,
    /// Averaged matched-word law: per letter, or per bin.
    pub average_pmf: Vec<S>,
}

/// Averages the matched word's empirical distribution over independent
/// trials, each against a fresh codebook, and reports the distance to the
/// tilted output law.
///
/// The truncation exponent is set to the solved rate plus half a bit. For
/// a discrete codebook whose distortion values lie on a lattice, the
/// matched word is drawn from its exact conditional law (the codebook law
/// restricted to the ball) instead of by literal scanning, which keeps
/// block lengths with astronomically large expected indices reachable;
/// truncation is reproduced exactly from the ball probability. Other
/// configurations scan literally under the default budget.
pub fn favorite_type<S: Scalar>(
    source: &SourceModel<S>,
    law: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<FavoriteTypeReport<S>> {
    favorite_type_impl(source, law, distortion, level, n, trials, seed, false)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn favorite_type_impl<S: Scalar>(
    source: &SourceModel<S>,
    law: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    n: usize,
    trials: usize,
    seed: u64,
    force_literal: bool,
) -> Result<FavoriteTypeReport<S>> {
    if n == 0 || trials == 0 {
        return Err(Error::domain("need a positive block length and trial count"));
    }
    let marginal = source.marginal();
    // Reference law and truncation exponent. Outside the solvable band
    // (level at or past the average distortion, or a degenerate pairing)
    // the tilt is zero and the reference is the codebook law itself.
    let (reference, b) = match rate_pqd(&marginal, law, distortion, level) {
        Ok(sol) => {
            let b = sol.rate_bits + S::of(0.5);
            (sol.q_star, b)
        }
        Err(e) if e.is_validation() => (reference_from_law(law)?, S::of(0.5)),
        Err(e) => return Err(e),
    };

    let sampler = match law {
        CodebookLaw::DiscretePmf(q) if !force_literal => {
            LatticeBall::detect(&marginal, q, distortion, n, level)?
        }
        _ => None,
    };

    let block_fam = StreamFamily::new(seed, "favorite-type-blocks");
    let word_fam = StreamFamily::new(seed, "favorite-type-words");
    let seed_fam = StreamFamily::new(seed, "favorite-type-codebooks");

    enum Tally<S: Scalar> {
        Letters { letters: Vec<S>, sums: Vec<S> },
        Bins { edges: Vec<S>, sums: Vec<S> },
    }
    let mut tally = match law {
        CodebookLaw::DiscretePmf(q) => Tally::Letters {
            letters: q.support().to_vec(),
            sums: vec![S::zero(); q.len()],
        },
        _ => Tally::Bins {
            edges: equal_probability_edges(&reference)?,
            sums: vec![S::zero(); TYPE_BINS],
        },
    };
    let mut matched_trials = 0usize;
    let mut truncated_trials = 0usize;
    let weight = S::one() / S::of_usize(n);

    for t in 0..trials {
        let mut block_rng = block_fam.stream(t as u64);
        let x = source.sample_block(n, &mut block_rng);
        let word: Option<Vec<S>> = match &sampler {
            Some(ball) => {
                let mut word_rng = word_fam.stream(t as u64);
                ball.draw(&x, b, &mut word_rng)?
            }
            None => {
                let cb_seed = seed_fam.stream(t as u64).next_u64();
                let codebook = Codebook::new(n, law.clone(), cb_seed)?;
                let trace =
                    first_match(&x, &codebook, distortion, level, b, DEFAULT_SEARCH_BUDGET)?;
                trace.word
            }
        };
        match word {
            None => truncated_trials += 1,
            Some(w) => {
                matched_trials += 1;
                match &mut tally {
                    Tally::Letters { letters, sums } => {
                        for &y in &w {
                            let slot = letters
                                .iter()
                                .position(|&a| a == y)
                                .ok_or_else(|| Error::numerical(format!(
                                    "matched letter {y} is outside the codebook alphabet"
                                )))?;
                            sums[slot] += weight;
                        }
                    }
                    Tally::Bins { edges, sums } => {
                        for &y in &w {
                            sums[bin_of(edges, y)] += weight;
                        }
                    }
                }
            }
        }
    }
    if matched_trials == 0 {
        return Err(Error::DegenerateSample(format!(
            "all {trials} trials truncated; no matched word to average"
        )));
    }

    let m_real = S::of_usize(matched_trials);
    let (support, average_pmf, distance) = match tally {
        Tally::Letters { letters, mut sums } => {
            sums.iter_mut().for_each(|s| *s /= m_real);
            // Renormalize away the accumulated dust before the TV check.
            let total: S = sums.iter().copied().sum();
            sums.iter_mut().for_each(|s| *s /= total);
            let empirical = DiscreteDistribution::new(letters.clone(), sums.clone())?;
            let tv = reference.total_variation(&empirical)?;
            (letters, sums, tv)
        }
        Tally::Bins { edges, mut sums } => {
            sums.iter_mut().for_each(|s| *s /= m_real);
            let flat = S::one() / S::of_usize(TYPE_BINS);
            let l1 = sums.iter().map(|&s| (s - flat).abs()).sum();
            (edges, sums, l1)
        }
    };
    Ok(FavoriteTypeReport {
        n,
        trials,
        matched_trials,
        truncated_trials,
        distance,
        support,
        average_pmf,
    })
}

/// The codebook law as a comparison target when no tilt exists.
fn reference_from_law<S: Scalar>(law: &CodebookLaw<S>) -> Result<QStar<S>> {
    match law {
        CodebookLaw::DiscretePmf(d) => Ok(QStar::Discrete(d.clone())),
        CodebookLaw::Gaussian { tau_sq } => {
            let span = S::of(8.0) * tau_sq.sqrt();
            grid_reference(law, span)
        }
        CodebookLaw::ExponentialFamily(f) => {
            let span = S::of(1.5) * f.tail_cutoff();
            grid_reference(law, span)
        }
    }
}

fn grid_reference<S: Scalar>(law: &CodebookLaw<S>, span: S) -> Result<QStar<S>> {
    let count = 2048usize;
    let mut points = Vec::with_capacity(count);
    let mut densities = Vec::with_capacity(count);
    for i in 0..count {
        let y = -span + S::of(2.0) * span * S::of_usize(i) / S::of_usize(count - 1);
        points.push(y);
        densities.push(law.mass_or_density(y)?);
    }
    Ok(QStar::Grid { points, densities })
}

/// Interior edges of equal-probability bins under a gridded density.
fn equal_probability_edges<S: Scalar>(reference: &QStar<S>) -> Result<Vec<S>> {
    let QStar::Grid { points, densities } = reference else {
        return Err(Error::unsupported(
            "equal-probability bins need a gridded density",
        ));
    };
    // Trapezoid cumulative mass along the grid.
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(S::zero());
    for i in 1..points.len() {
        let panel = (densities[i] + densities[i - 1])
            * (points[i] - points[i - 1])
            / S::of(2.0);
        let prev = *cumulative.last().expect("nonempty");
        cumulative.push(prev + panel);
    }
    let total = *cumulative.last().expect("nonempty");
    if !(total > S::zero()) {
        return Err(Error::numerical("reference density integrates to zero"));
    }
    let mut edges = Vec::with_capacity(TYPE_BINS - 1);
    let mut i = 1usize;
    for k in 1..TYPE_BINS {
        let target = total * S::of_usize(k) / S::of_usize(TYPE_BINS);
        while i < cumulative.len() - 1 && cumulative[i] < target {
            i += 1;
        }
        let lo = cumulative[i - 1];
        let hi = cumulative[i];
        let frac = if hi > lo { (target - lo) / (hi - lo) } else { S::zero() };
        edges.push(points[i - 1] + frac * (points[i] - points[i - 1]));
    }
    Ok(edges)
}

/// Bin index by interior edges: values below the first edge fall in bin 0.
fn bin_of<S: Scalar>(edges: &[S], y: S) -> usize {
    edges.partition_point(|&e| e < y)
}

/// Exact conditional sampler for the matched word when the per-letter
/// distortion values lie on a common lattice.
///
/// With integer costs `c = rho / delta` and budget `m = floor(n D / delta)`,
/// suffix tail probabilities `G[i][s] = Pr(sum of costs from position i
/// fits in s)` give both the exact ball probability `G[0][m]` and a
/// position-by-position sampler of the codebook law restricted to the ball.
struct LatticeBall<S: Scalar> {
    letters: Vec<S>,
    probs: Vec<S>,
    /// Integer cost per (source letter, codebook letter).
    costs: Vec<Vec<u32>>,
    source_letters: Vec<S>,
    n: usize,
    budget: usize,
}

impl<S: Scalar> LatticeBall<S> {
    /// Returns a sampler when every distortion value over source times
    /// codebook letters is an integer multiple of a common quantum.
    fn detect(
        marginal: &crate::distributions::SourceMarginal<S>,
        q: &DiscreteDistribution<S>,
        distortion: &Distortion<S>,
        n: usize,
        level: S,
    ) -> Result<Option<Self>> {
        let crate::distributions::SourceMarginal::Discrete(p) = marginal else {
            return Ok(None);
        };
        let matrix = distortion.matrix(p.support(), q.support())?;
        let mut values: Vec<f64> = Vec::new();
        for row in &matrix {
            for &v in row {
                let v = v.as_f64();
                if !(v >= 0.0) || !v.is_finite() {
                    return Ok(None);
                }
                if v > 0.0 {
                    values.push(v);
                }
            }
        }
        if values.is_empty() {
            // Every pairing is free; the ball is everything.
            return Ok(None);
        }
        let mut delta = values[0];
        for &v in &values[1..] {
            delta = real_gcd(delta, v);
        }
        let scale = values.iter().cloned().fold(0.0, f64::max);
        if delta < scale * 1e-9 {
            return Ok(None);
        }
        for &v in &values {
            let ratio = v / delta;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Ok(None);
            }
        }
        let budget_real = (S::of_usize(n) * level).as_f64() / delta;
        if !(budget_real >= 0.0) {
            return Ok(None);
        }
        let budget = (budget_real + 1e-9).floor() as usize;
        if guard_size(
            "lattice ball table",
            (n as u128 + 1) * (budget as u128 + 1),
            LATTICE_GUARD,
        )
        .is_err()
        {
            return Ok(None);
        }
        let costs = matrix
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| (v.as_f64() / delta).round() as u32)
                    .collect()
            })
            .collect();
        Ok(Some(LatticeBall {
            letters: q.support().to_vec(),
            probs: q.probs().to_vec(),
            costs,
            source_letters: p.support().to_vec(),
            n,
            budget,
        }))
    }

    /// Draws the matched word for one block, or `None` on truncation.
    ///
    /// Consumes one uniform for the truncation event, then one per position.
    fn draw(
        &self,
        x: &[S],
        b: S,
        rng: &mut impl rand_core::RngCore,
    ) -> Result<Option<Vec<S>>> {
        let n = self.n;
        let width = self.budget + 1;
        let slots: Vec<usize> = x
            .iter()
            .map(|&xi| {
                self.source_letters
                    .iter()
                    .position(|&a| a == xi)
                    .ok_or_else(|| Error::domain(format!("{xi} is not a source letter")))
            })
            .collect::<Result<_>>()?;
        // Suffix tails, built back to front.
        let mut tail = vec![S::zero(); (n + 1) * width];
        for s in 0..width {
            tail[n * width + s] = S::one();
        }
        for i in (0..n).rev() {
            let row = &self.costs[slots[i]];
            for s in 0..width {
                let mut total = S::zero();
                for (a, &c) in row.iter().enumerate() {
                    if (c as usize) <= s {
                        total += self.probs[a] * tail[(i + 1) * width + s - c as usize];
                    }
                }
                tail[i * width + s] = total;
            }
        }
        let p_ball = tail[self.budget];
        let trunc_draw: S = uniform_half_open(rng);
        if p_ball <= S::zero() {
            return Ok(None);
        }
        // Truncation probability (1 - p)^cap without forming the cap as an
        // integer: the exponent may exceed 64 bits.
        let nb = S::of_usize(n).as_f64() * b.as_f64();
        let cap = 2f64.powf(nb).floor().max(1.0);
        let log_trunc = cap * (-p_ball).ln_1p().as_f64();
        if trunc_draw.as_f64() < log_trunc.exp() {
            return Ok(None);
        }
        let mut word = Vec::with_capacity(n);
        let mut remaining = self.budget;
        for i in 0..n {
            let row = &self.costs[slots[i]];
            let norm = tail[i * width + remaining];
            let mut r = uniform_half_open::<S>(rng) * norm;
            let mut chosen = None;
            for (a, &c) in row.iter().enumerate() {
                if (c as usize) > remaining {
                    continue;
                }
                let w = self.probs[a] * tail[(i + 1) * width + remaining - c as usize];
                if w <= S::zero() {
                    continue;
                }
                if r < w {
                    chosen = Some(a);
                    break;
                }
                r -= w;
            }
            let a = match chosen {
                Some(a) => a,
                // Rounding dust: fall back to the last feasible letter.
                None => {
                    let mut last = None;
                    for (a, &c) in row.iter().enumerate() {
                        if (c as usize) <= remaining
                            && self.probs[a] * tail[(i + 1) * width + remaining - c as usize]
                                > S::zero()
                        {
                            last = Some(a);
                        }
                    }
                    last.ok_or_else(|| {
                        Error::numerical("conditional sampler ran out of feasible letters")
                    })?
                }
            };
            word.push(self.letters[a]);
            remaining -= row[a] as usize;
        }
        Ok(Some(word))
    }
}

/// Greatest common quantum of two positive reals, by Euclid with a
/// tolerance; exact for values that are rational multiples of each other.
fn real_gcd(a: f64, b: f64) -> f64 {
    let (mut a, mut b) = (a.max(b), a.min(b));
    let tol = 1e-12 * a;
    while b > tol {
        let r = a % b;
        a = b;
        b = if r < tol || b - r < tol { 0.0 } else { r };
    }
    a
}

/// Monte Carlo estimate of the ball exponent `-(1/n) log2 Q^n(ball)`.
#[derive(Debug, Clone)]
pub struct BallProbEstimate<S: Scalar> {
    pub n: usize,
    pub trials: usize,
    pub hits: u64,
    /// `-(1/n) log2` of the hit frequency; infinite when nothing hit.
    pub exponent_bits: S,
    /// Delta-method standard error of the exponent.
    pub std_error_bits: S,
    /// 95% one-sided lower bound on the exponent.
    pub lower_bound_bits: S,
    /// True when no draw hit, so only the lower bound carries information.
    pub zero_hits: bool,
}

/// Estimates the probability that an i.i.d. draw from the codebook law
/// lands within mean distortion `level` of the block.
pub fn ball_log_prob<S: Scalar>(
    x_block: &[S],
    law: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    trials: usize,
    seed: u64,
) -> Result<BallProbEstimate<S>> {
    let n = x_block.len();
    if n == 0 || trials == 0 {
        return Err(Error::domain("need a nonempty block and a positive trial count"));
    }
    let fam = StreamFamily::new(seed, "ball-prob");
    let mut hits = 0u64;
    let mut word = Vec::with_capacity(n);
    for t in 0..trials {
        let mut rng = fam.stream(t as u64);
        word.clear();
        for _ in 0..n {
            word.push(law.sample(&mut rng));
        }
        if distortion.in_ball(x_block, &word, level)? {
            hits += 1;
        }
    }
    let t_real = S::of_usize(trials);
    let n_real = S::of_usize(n);
    if hits == 0 {
        // No hit: p < 3/trials at 95% confidence, so the exponent exceeds
        // log2(trials/3)/n.
        let lower = (t_real / S::of(3.0)).log2() / n_real;
        return Ok(BallProbEstimate {
            n,
            trials,
            hits,
            exponent_bits: S::infinity(),
            std_error_bits: S::infinity(),
            lower_bound_bits: lower.max(S::zero()),
            zero_hits: true,
        });
    }
    let p_hat = S::of(hits as f64) / t_real;
    let exponent = -p_hat.log2() / n_real;
    let se_p = (p_hat * (S::one() - p_hat) / t_real).sqrt();
    let se = se_p / (p_hat * n_real * S::LN_2());
    let lower = (exponent - S::of(1.645) * se).max(S::zero());
    Ok(BallProbEstimate {
        n,
        trials,
        hits,
        exponent_bits: exponent,
        std_error_bits: se,
        lower_bound_bits: lower,
        zero_hits: false,
    })
}

/// Exact ball exponent by exhaustive enumeration; delegates to the oracle
/// and is sized for short blocks over small alphabets.
pub fn ball_log_prob_exact<S: Scalar>(
    x_block: &[S],
    q: &DiscreteDistribution<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<S> {
    let n = x_block.len();
    if n == 0 {
        return Err(Error::domain("need a nonempty block"));
    }
    let x: Vec<f64> = x_block.iter().map(|v| v.as_f64()).collect();
    let letters: Vec<f64> = q.support().iter().map(|v| v.as_f64()).collect();
    let probs: Vec<f64> = q.probs().iter().map(|v| v.as_f64()).collect();
    let p = brute_ball_prob(
        &x,
        &letters,
        &probs,
        |a, b| {
            distortion
                .rho(S::of(a), S::of(b))
                .map(|v| v.as_f64())
                .unwrap_or(f64::NAN)
        },
        level.as_f64(),
    )?;
    if !p.is_finite() {
        return Err(Error::numerical(
            "ball probability did not evaluate cleanly over the alphabets",
        ));
    }
    if p <= 0.0 {
        return Ok(S::infinity());
    }
    Ok(S::of(-p.log2() / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::Distortion;
    use crate::distributions::SourceMarginal;
    use crate::codec::wqc::wqc_build;
    use crate::oracle::brute_index_entropy;

    fn bern_source(p: f64) -> SourceModel<f64> {
        SourceModel::DiscreteIid(DiscreteDistribution::bernoulli(p).unwrap())
    }

    fn bern_law(p: f64) -> CodebookLaw<f64> {
        CodebookLaw::DiscretePmf(DiscreteDistribution::bernoulli(p).unwrap())
    }

    #[test]
    fn always_matching_source_has_zero_index_entropy() {
        let cb = Codebook::new(8, bern_law(0.5), 3).unwrap();
        let est = index_entropy_estimate(
            &bern_source(0.3),
            &cb,
            &Distortion::Hamming,
            1.0,
            1.0,
            1_000,
            None,
        )
        .unwrap();
        assert_eq!(est.plug_in_bits, 0.0);
        assert_eq!(est.miller_madow_bits, 0.0);
        assert_eq!(est.std_error_bits, 0.0);
        assert_eq!(est.distinct, 1);
        assert_eq!(est.truncated_trials, 0);
        // Elias(1) is one bit, per block of 8
        assert!((est.mean_index_bits - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_obeys_the_cap_bound_and_matches_the_oracle() {
        let n = 6;
        let b = 2.0f64;
        let cb = Codebook::new(n, bern_law(0.9), 17).unwrap();
        let est = index_entropy_estimate(
            &bern_source(0.3),
            &cb,
            &Distortion::Hamming,
            0.15,
            b,
            20_000,
            None,
        )
        .unwrap();
        assert!(est.plug_in_bits >= 0.0);
        assert!(est.plug_in_bits <= b + 1.0 / n as f64);
        assert!(est.miller_madow_bits >= est.plug_in_bits);
        // Exact pushforward entropy for the same fixed codebook.
        let cap = index_cap(n, b);
        let words: Vec<Vec<f64>> = (1..=cap).map(|i| cb.word(i).unwrap()).collect();
        let exact = brute_index_entropy(
            &[0.0, 1.0],
            &[0.7, 0.3],
            n,
            &words,
            |a, b| if a == b { 0.0 } else { 1.0 },
            0.15,
        )
        .unwrap();
        let slack = 3.0 * est.std_error_bits + 0.01;
        assert!(
            (est.plug_in_bits - exact).abs() <= slack,
            "plug-in {} vs exact {exact}, slack {slack}",
            est.plug_in_bits
        );
    }

    #[test]
    fn memoized_scan_agrees_with_independent_searches() {
        let n = 6;
        let cb = Codebook::new(n, bern_law(0.5), 29).unwrap();
        let dist = Distortion::Hamming;
        let fam = StreamFamily::new(cb.seed(), "index-entropy-blocks");
        let mut blocks = Vec::new();
        for t in 0..40u64 {
            let mut rng = fam.stream(t);
            blocks.push(bern_source(0.3).sample_block(n, &mut rng));
        }
        let cap = index_cap(n, 2.0f64);
        let scanned = scan_indices(&cb, &dist, 1.0 / 6.0, cap, &blocks).unwrap();
        for (x, &idx) in blocks.iter().zip(&scanned) {
            let trace = first_match(x, &cb, &dist, 1.0 / 6.0, 2.0, DEFAULT_SEARCH_BUDGET).unwrap();
            assert_eq!(trace.index, idx, "block {x:?}");
        }
    }

    #[test]
    fn naive_length_accounts_for_truncated_fallback() {
        // A codebook that never produces the letter 1 forces truncation
        // whenever the block contains one.
        let law = CodebookLaw::DiscretePmf(
            DiscreteDistribution::new(vec![0.0f64, 1.0], vec![1.0, 0.0]).unwrap(),
        );
        let n = 4;
        let cb = Codebook::new(n, law, 5).unwrap();
        let marginal = SourceMarginal::Discrete(DiscreteDistribution::bernoulli(0.5f64).unwrap());
        let q = wqc_build(&marginal, &Distortion::Hamming, 0.0).unwrap();
        let est = index_entropy_estimate(
            &bern_source(0.5),
            &cb,
            &Distortion::Hamming,
            0.0,
            2.0,
            1_000,
            Some(&q),
        )
        .unwrap();
        assert!(est.truncated_trials > 0);
        // every truncated block pays exactly one extra bit per symbol on a
        // uniform binary fallback: mean naive = mean index + frac * 1.0
        let frac = est.truncated_trials as f64 / est.trials as f64;
        let expect = est.mean_index_bits + frac;
        assert!(
            (est.mean_naive_bits.unwrap() - expect).abs() < 1e-12,
            "naive {} vs {expect}",
            est.mean_naive_bits.unwrap()
        );
    }

    #[test]
    fn lattice_sampler_matches_literal_search() {
        let source = bern_source(0.3);
        let law = bern_law(0.5);
        let dist = Distortion::Hamming;
        let dp = favorite_type_impl(&source, &law, &dist, 0.25, 8, 3_000, 11, false).unwrap();
        let literal = favorite_type_impl(&source, &law, &dist, 0.25, 8, 3_000, 11, true).unwrap();
        assert_eq!(dp.trials, literal.trials);
        // Two Monte Carlo answers for the same distribution: the averaged
        // pmfs agree to sampling accuracy.
        for (a, b) in dp.average_pmf.iter().zip(&literal.average_pmf) {
            assert!((a - b).abs() < 0.03, "dp {a} vs literal {b}");
        }
        assert!((dp.distance - literal.distance).abs() < 0.03);
    }

    #[test]
    fn vanishing_tilt_reproduces_the_codebook_law() {
        // level close to the average distortion 0.66: the tilted law is
        // nearly the codebook law, and matching is nearly immediate.
        let report = favorite_type(
            &bern_source(0.3),
            &bern_law(0.9),
            &Distortion::Hamming,
            0.64,
            16,
            1_000,
            7,
        )
        .unwrap();
        assert_eq!(report.truncated_trials, 0);
        assert!(
            (report.average_pmf[1] - 0.9).abs() < 0.03,
            "ones frequency {}",
            report.average_pmf[1]
        );
        assert!(report.distance < 0.03, "distance {}", report.distance);
    }

    #[test]
    fn point_mass_codebook_is_recovered_exactly() {
        let law = CodebookLaw::DiscretePmf(
            DiscreteDistribution::new(vec![0.0f64, 1.0], vec![1.0, 0.0]).unwrap(),
        );
        let report = favorite_type(
            &bern_source(0.3),
            &law,
            &Distortion::Hamming,
            0.5,
            8,
            400,
            21,
        )
        .unwrap();
        assert_eq!(report.average_pmf, vec![1.0, 0.0]);
        assert_eq!(report.distance, 0.0);
        assert!(report.matched_trials > 0);
    }

    #[test]
    fn all_truncated_batch_is_a_degenerate_sample() {
        let law = CodebookLaw::DiscretePmf(
            DiscreteDistribution::new(vec![0.0f64, 1.0], vec![1.0, 0.0]).unwrap(),
        );
        // the source emits only ones; the codebook only zeros; no ball
        let source = SourceModel::DiscreteIid(
            DiscreteDistribution::new(vec![0.0f64, 1.0], vec![0.0, 1.0]).unwrap(),
        );
        let out = favorite_type(&source, &law, &Distortion::Hamming, 0.25, 8, 50, 3);
        assert!(matches!(out, Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn continuous_favorite_type_bins_the_matched_letters() {
        let source = SourceModel::<f64>::gaussian(1.0).unwrap();
        let law = CodebookLaw::gaussian(1.0f64).unwrap();
        let report = favorite_type(
            &source,
            &law,
            &Distortion::SquaredError,
            0.7,
            8,
            300,
            13,
        )
        .unwrap();
        assert_eq!(report.average_pmf.len(), TYPE_BINS);
        assert_eq!(report.support.len(), TYPE_BINS - 1);
        assert!(report.matched_trials > 0);
        let total: f64 = report.average_pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "bin masses sum to {total}");
        assert!(report.distance < 0.6, "distance {}", report.distance);
    }

    #[test]
    fn trivial_level_gives_zero_exponent() {
        let x = vec![1.0f64, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let est = ball_log_prob(&x, &bern_law(0.5), &Distortion::Hamming, 0.9, 2_000, 5).unwrap();
        assert!(!est.zero_hits);
        assert!(est.exponent_bits < 0.01, "exponent {}", est.exponent_bits);
    }

    #[test]
    fn monte_carlo_tracks_the_exact_exponent() {
        let x = vec![1.0f64, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let q = DiscreteDistribution::bernoulli(0.7f64).unwrap();
        let dist = Distortion::Hamming;
        let exact = ball_log_prob_exact(&x, &q, &dist, 0.2).unwrap();
        let law = CodebookLaw::DiscretePmf(q);
        let est = ball_log_prob(&x, &law, &dist, 0.2, 40_000, 9).unwrap();
        assert!(!est.zero_hits);
        assert!(
            (est.exponent_bits - exact).abs() <= 4.0 * est.std_error_bits + 1e-9,
            "mc {} vs exact {exact} (se {})",
            est.exponent_bits,
            est.std_error_bits
        );
    }

    #[test]
    fn zero_hits_reports_a_flagged_lower_bound() {
        let law = CodebookLaw::DiscretePmf(
            DiscreteDistribution::new(vec![0.0f64, 1.0], vec![1.0, 0.0]).unwrap(),
        );
        let x = vec![1.0f64; 6];
        let est = ball_log_prob(&x, &law, &Distortion::Hamming, 0.3, 500, 2).unwrap();
        assert!(est.zero_hits);
        assert_eq!(est.hits, 0);
        assert!(est.exponent_bits.is_infinite());
        let expect = (500.0f64 / 3.0).log2() / 6.0;
        assert!((est.lower_bound_bits - expect).abs() < 1e-12);
    }

    #[test]
    fn estimates_reproduce_bit_for_bit() {
        let x = vec![1.0f64, 0.0, 1.0, 0.0];
        let a = ball_log_prob(&x, &bern_law(0.4), &Distortion::Hamming, 0.25, 3_000, 77).unwrap();
        let b = ball_log_prob(&x, &bern_law(0.4), &Distortion::Hamming, 0.25, 3_000, 77).unwrap();
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.exponent_bits.to_bits(), b.exponent_bits.to_bits());
    }

    #[test]
    fn rejects_undersized_trial_counts() {
        let cb = Codebook::new(8, bern_law(0.5), 3).unwrap();
        let out = index_entropy_estimate(
            &bern_source(0.3),
            &cb,
            &Distortion::Hamming,
            1.0,
            1.0,
            999,
            None,
        );
        assert!(out.is_err());
        // n * b beyond the samplable range
        let wide = Codebook::new(32, bern_law(0.5), 3).unwrap();
        let out = index_entropy_estimate(
            &bern_source(0.3),
            &wide,
            &Distortion::Hamming,
            0.2,
            1.0,
            1_000,
            None,
        );
        assert!(out.is_err());
    }
}
