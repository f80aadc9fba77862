//! Block extensions of the matching rate: the dual solver run on k-tuple
//! alphabets with additive per-letter distortion, for sources with memory.

use crate::distortion::{Distortion, DistortionExtremes};
use crate::distributions::{CodebookLaw, KBlockMarginal, SourceModel};
use crate::error::{guard_size, Error, Result};
use crate::numeric::logsumexp;
use crate::scalar::Scalar;

use super::solve_tilt;

/// Cap on `|source blocks| * |codebook blocks|` for the block dual.
const BLOCK_CELL_GUARD: u128 = 1_000_000;

/// Matching rate per symbol over k-blocks: the block dual at level
/// `k * level` divided by `k`, in bits per symbol. For memoryless sources
/// this equals the single-letter rate; for sources with memory it reflects
/// the true block statistics.
pub fn rate_kblock<S: Scalar>(
    source: &SourceModel<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    k: usize,
) -> Result<S> {
    Ok(solve_block(source, q, distortion, level, k)?.rate_bits_per_symbol)
}

/// Coupling part of the block rate per symbol: block rate minus the block
/// output-law mismatch, in bits per symbol.
pub fn lmi_kblock<S: Scalar>(
    source: &SourceModel<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    k: usize,
) -> Result<S> {
    Ok(solve_block(source, q, distortion, level, k)?.lmi_bits_per_symbol)
}

struct BlockSolution<S> {
    rate_bits_per_symbol: S,
    lmi_bits_per_symbol: S,
}

/// Runs the tilt dual on the k-block problem: source blocks from the
/// model's exact k-block marginal, product codebook over k letters, and
/// the distortion summed across coordinates.
fn solve_block<S: Scalar>(
    source: &SourceModel<S>,
    q: &CodebookLaw<S>,
    distortion: &Distortion<S>,
    level: S,
    k: usize,
) -> Result<BlockSolution<S>> {
    if k == 0 {
        return Err(Error::domain("block length must be at least 1"));
    }
    let CodebookLaw::DiscretePmf(qd) = q else {
        return Err(Error::unsupported(
            "block rates require a discrete codebook law",
        ));
    };
    let KBlockMarginal::Discrete(block) = source.k_block_marginal(k)? else {
        return Err(Error::unsupported(
            "block rates require a discrete source model",
        ));
    };
    // Product codebook over k coordinates.
    let n1 = qd.len();
    let n_blocks = (n1 as u128).checked_pow(k as u32).ok_or_else(|| {
        Error::domain(format!("codebook block count overflows at k = {k}"))
    })?;
    guard_size(
        "block dual cells",
        n_blocks.saturating_mul(block.tuples.len() as u128),
        BLOCK_CELL_GUARD,
    )?;
    let n = n_blocks as usize;
    let mut q_tuples: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut idx = vec![0usize; k];
    loop {
        q_tuples.push(idx.clone());
        let mut pos = k;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n1 {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&v| v == 0) {
            break;
        }
    }
    let mut ln_q_block = Vec::with_capacity(n);
    for tuple in &q_tuples {
        let mut lq = S::zero();
        for &j in tuple {
            let mass = qd.probs()[j];
            if mass == S::zero() {
                lq = S::neg_infinity();
                break;
            }
            lq += mass.ln();
        }
        ln_q_block.push(lq);
    }
    // Summed per-letter distortion across coordinates.
    let m = block.tuples.len();
    let mut cost = vec![vec![S::zero(); n]; m];
    for (i, src) in block.tuples.iter().enumerate() {
        for (j, rep) in q_tuples.iter().enumerate() {
            let mut total = S::zero();
            for t in 0..k {
                total += distortion.rho(block.letters[src[t]], qd.support()[rep[t]])?;
            }
            cost[i][j] = total;
        }
    }
    let p = &block.probs;
    // Block distortion extremes under the product reference.
    let mut d_min = S::zero();
    let mut d_av = S::zero();
    for i in 0..m {
        if p[i] == S::zero() {
            continue;
        }
        let mut row_min = S::infinity();
        let mut row_av = S::zero();
        for j in 0..n {
            if ln_q_block[j] > S::neg_infinity() {
                row_min = row_min.min(cost[i][j]);
                row_av += ln_q_block[j].exp() * cost[i][j];
            }
        }
        d_min += p[i] * row_min;
        d_av += p[i] * row_av;
    }
    let ext = DistortionExtremes { d_min, d_av };
    let block_level = S::of_usize(k) * level;
    let value = |t: S| -> Result<S> {
        let mut total = S::zero();
        for i in 0..m {
            if p[i] == S::zero() {
                continue;
            }
            let terms: Vec<S> = (0..n)
                .filter(|&j| ln_q_block[j] > S::neg_infinity())
                .map(|j| ln_q_block[j] + t * cost[i][j])
                .collect();
            total += p[i] * logsumexp(&terms);
        }
        Ok(total)
    };
    let derivative = |t: S| -> Result<S> {
        let mut total = S::zero();
        for i in 0..m {
            if p[i] == S::zero() {
                continue;
            }
            let mut best = S::neg_infinity();
            let mut terms = Vec::with_capacity(n);
            for j in 0..n {
                if ln_q_block[j] > S::neg_infinity() {
                    let lt = ln_q_block[j] + t * cost[i][j];
                    best = best.max(lt);
                    terms.push((lt, cost[i][j]));
                }
            }
            let mut den = S::zero();
            let mut num = S::zero();
            for (lt, c) in terms {
                let w = (lt - best).exp();
                den += w;
                num += w * c;
            }
            total += p[i] * num / den;
        }
        Ok(total)
    };
    let tilt = solve_tilt(derivative, block_level, &ext)?;
    let rate_nats = (tilt * block_level - value(tilt)?).max(S::zero());
    // Output block law and its divergence from the product codebook.
    let mut q_out = vec![S::zero(); n];
    for i in 0..m {
        if p[i] == S::zero() {
            continue;
        }
        let terms: Vec<S> = (0..n)
            .map(|j| {
                if ln_q_block[j] > S::neg_infinity() {
                    ln_q_block[j] + tilt * cost[i][j]
                } else {
                    S::neg_infinity()
                }
            })
            .collect();
        let log_z = logsumexp(&terms);
        for (slot, lt) in q_out.iter_mut().zip(&terms) {
            *slot += p[i] * (*lt - log_z).exp();
        }
    }
    let total: S = q_out.iter().copied().sum();
    for v in &mut q_out {
        *v /= total;
    }
    let mut gap_nats = S::zero();
    for (w, lq) in q_out.iter().zip(&ln_q_block) {
        if *w > S::zero() {
            gap_nats += *w * (w.ln() - *lq);
        }
    }
    gap_nats = gap_nats.max(S::zero());
    let per = S::of_usize(k) * S::LN_2();
    Ok(BlockSolution {
        rate_bits_per_symbol: rate_nats / per,
        lmi_bits_per_symbol: (rate_nats - gap_nats).max(S::zero()) / per,
    })
}
