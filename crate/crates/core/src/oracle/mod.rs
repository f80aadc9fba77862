//! Brute-force reference solvers on small discrete instances.
//!
//! Everything here is deliberately independent of the fast solvers it
//! validates: no code is shared with the production paths beyond basic
//! utilities, and each optimization is done by a second method where the
//! contract asks for a cross-check. Oracles work in `f64` directly; size
//! guards are hard errors so a returned value is always trustworthy.

pub mod transport;

use crate::error::{guard_size, Error, Result};
use crate::rng::{uniform_half_open, StreamFamily};
pub use transport::min_transport_cost;

/// Largest `|A| * |Ahat|` the descent oracles accept.
pub const CELL_GUARD: u128 = 64;
/// Largest enumerated word count for exact ball probabilities.
pub const BALL_GUARD: u128 = 10_000_000;
/// Largest enumerated source-block count for exact index entropy.
pub const INDEX_GUARD: u128 = 1_000_000;

/// A joint pmf over a small product alphabet, row-indexed by the source.
#[derive(Debug, Clone)]
pub struct JointPmf {
    pub w: Vec<Vec<f64>>,
}

impl JointPmf {
    pub fn x_marginal(&self) -> Vec<f64> {
        self.w.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        let n = self.w.first().map_or(0, |r| r.len());
        let mut q = vec![0.0; n];
        for row in &self.w {
            for (j, &v) in row.iter().enumerate() {
                q[j] += v;
            }
        }
        q
    }

    pub fn expected_cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.w
            .iter()
            .zip(cost)
            .map(|(wr, cr)| wr.iter().zip(cr).map(|(&w, &c)| w * c).sum::<f64>())
            .sum()
    }
}

/// Result of the constrained divergence minimization.
#[derive(Debug, Clone)]
pub struct BruteRate {
    /// Primal value from projected-gradient descent, in bits.
    pub bits: f64,
    /// Independent dual value from the tilt-parameter sweep, in bits.
    pub dual_bits: f64,
    /// Minimizing joint pmf from the primal method.
    pub joint: JointPmf,
}

/// Minimizes `H(W || P x Q)` over joint pmfs whose X-marginal is `p` and
/// whose expected cost is at most `level`, by projected gradient descent
/// with seeded restarts, cross-checked by a dense sweep of the tilted
/// family. Alphabet letters are abstract indices; `cost[i][j]` carries the
/// distortion.
pub fn brute_rate_min(
    p: &[f64],
    q: &[f64],
    cost: &[Vec<f64>],
    level: f64,
) -> Result<BruteRate> {
    check_instance(p, q, cost)?;
    let feasible_min: f64 = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            if pi == 0.0 {
                return 0.0;
            }
            let best = cost[i]
                .iter()
                .zip(q)
                .filter(|(_, &qj)| qj > 0.0)
                .map(|(&c, _)| c)
                .fold(f64::INFINITY, f64::min);
            pi * best
        })
        .sum();
    if level < feasible_min - 1e-12 {
        return Err(Error::domain(format!(
            "no coupling with X-marginal p reaches expected cost {level}; minimum is {feasible_min}"
        )));
    }

    // Primal: decision variable is the conditional w(j | i); rows with
    // p_i = 0 are irrelevant and held uniform.
    let m = p.len();
    let n = q.len();
    let objective = |w: &[f64]| -> f64 {
        let mut f = 0.0;
        for i in 0..m {
            if p[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = w[i * n + j];
                if v > 0.0 {
                    if q[j] == 0.0 {
                        return f64::INFINITY;
                    }
                    f += p[i] * v * (v / q[j]).ln();
                }
            }
        }
        f
    };
    let gradient = |w: &[f64], g: &mut [f64]| {
        for i in 0..m {
            for j in 0..n {
                let v = w[i * n + j].max(1e-12);
                g[i * n + j] = if p[i] == 0.0 || q[j] == 0.0 {
                    0.0
                } else {
                    p[i] * ((v / q[j]).ln() + 1.0)
                };
            }
        }
    };
    // Constraint weights for the halfspace sum_ij p_i c_ij w_ij <= level.
    let weights: Vec<f64> = (0..m * n).map(|k| p[k / n] * cost[k / n][k % n]).collect();
    let project = |w: &mut [f64]| {
        dykstra_rows_and_halfspace(w, m, n, &weights, level, q);
    };

    let fam = StreamFamily::new(0x0bac1e, "rate-min-restarts");
    let mut best_val = f64::INFINITY;
    let mut best_w: Vec<f64> = vec![0.0; m * n];
    for restart in 0..50 {
        let mut w = initial_conditional(m, n, q, restart, &fam);
        project(&mut w);
        let val = descend(&mut w, &objective, &gradient, &project);
        if val < best_val {
            best_val = val;
            best_w.copy_from_slice(&w);
        }
    }

    // Independent dual: sweep the tilt parameter, then refine by bisection
    // on the derivative matching the level.
    let dual_nats = dual_by_sweep(p, q, cost, level)?;

    let joint = JointPmf {
        w: (0..m)
            .map(|i| (0..n).map(|j| p[i] * best_w[i * n + j]).collect())
            .collect(),
    };
    Ok(BruteRate {
        bits: best_val / std::f64::consts::LN_2,
        dual_bits: dual_nats / std::f64::consts::LN_2,
        joint,
    })
}

/// Minimizes mutual information over couplings with both marginals fixed
/// and expected cost at most `level` (projected gradient over the
/// transportation polytope). Infeasible levels are rejected exactly via
/// the transport oracle.
pub fn brute_lmi(p: &[f64], q: &[f64], cost: &[Vec<f64>], level: f64) -> Result<f64> {
    check_instance(p, q, cost)?;
    let min_cost = min_transport_cost(p, q, cost)?;
    if level < min_cost - 1e-12 {
        return Err(Error::domain(format!(
            "no coupling of the two marginals has expected cost <= {level}; minimum is {min_cost}"
        )));
    }
    let m = p.len();
    let n = q.len();
    let objective = |w: &[f64]| -> f64 {
        let mut f = 0.0;
        for i in 0..m {
            for j in 0..n {
                let v = w[i * n + j];
                if v > 1e-300 {
                    let base = p[i] * q[j];
                    if base == 0.0 {
                        return f64::INFINITY;
                    }
                    f += v * (v / base).ln();
                }
            }
        }
        f
    };
    let gradient = |w: &[f64], g: &mut [f64]| {
        for i in 0..m {
            for j in 0..n {
                let v = w[i * n + j].max(1e-12);
                let base = (p[i] * q[j]).max(1e-300);
                g[i * n + j] = (v / base).ln() + 1.0;
            }
        }
    };
    let flat_cost: Vec<f64> = (0..m * n).map(|k| cost[k / n][k % n]).collect();
    let project = |w: &mut [f64]| {
        dykstra_transport(w, m, n, p, q, &flat_cost, level);
    };
    let fam = StreamFamily::new(0x10af1, "lmi-restarts");
    let mut best = f64::INFINITY;
    for restart in 0..50 {
        let mut w: Vec<f64> = if restart == 0 {
            (0..m * n).map(|k| p[k / n] * q[k % n]).collect()
        } else {
            let mut rng = fam.stream(restart as u64);
            let mut v: Vec<f64> = (0..m * n)
                .map(|_| -uniform_half_open::<f64>(&mut rng).max(1e-12).ln())
                .collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        project(&mut w);
        let val = descend(&mut w, &objective, &gradient, &project);
        best = best.min(val);
    }
    Ok(best / std::f64::consts::LN_2)
}

/// Exact probability that an i.i.d. draw from `q` lands within mean
/// distortion `level` of `x_block`. Enumerates the whole reproduction space
/// with branch-and-bound pruning; the guard rejects oversized instances.
pub fn brute_ball_prob(
    x_block: &[f64],
    q_letters: &[f64],
    q_probs: &[f64],
    rho: impl Fn(f64, f64) -> f64,
    level: f64,
) -> Result<f64> {
    let n = x_block.len();
    let a = q_letters.len();
    if n == 0 || a == 0 || q_letters.len() != q_probs.len() {
        return Err(Error::model("empty block or malformed codebook pmf"));
    }
    guard_size(
        "exact ball enumeration",
        (a as u128).saturating_pow(n as u32),
        BALL_GUARD,
    )?;
    // Per-position costs, plus suffix minima for pruning.
    let costs: Vec<Vec<f64>> = x_block
        .iter()
        .map(|&x| q_letters.iter().map(|&y| rho(x, y)).collect())
        .collect();
    let row_min: Vec<f64> = costs
        .iter()
        .map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let mut suffix_min = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_min[i] = suffix_min[i + 1] + row_min[i];
    }
    let budget = level * n as f64;
    let slack = 1e-9 * budget.abs().max(1.0);

    fn recurse(
        pos: usize,
        partial_cost: f64,
        partial_prob: f64,
        n: usize,
        costs: &[Vec<f64>],
        q_probs: &[f64],
        suffix_min: &[f64],
        budget: f64,
        slack: f64,
        level: f64,
    ) -> f64 {
        if partial_cost + suffix_min[pos] > budget + slack {
            return 0.0;
        }
        if pos == n {
            // Exact membership test mirrors the ball definition.
            let mean = partial_cost / n as f64;
            return if mean <= level { partial_prob } else { 0.0 };
        }
        let mut total = 0.0;
        for (j, &qj) in q_probs.iter().enumerate() {
            if qj > 0.0 {
                total += recurse(
                    pos + 1,
                    partial_cost + costs[pos][j],
                    partial_prob * qj,
                    n,
                    costs,
                    q_probs,
                    suffix_min,
                    budget,
                    slack,
                    level,
                );
            }
        }
        total
    }
    Ok(recurse(
        0, 0.0, 1.0, n, &costs, q_probs, &suffix_min, budget, slack, level,
    ))
}

/// Exact conditional entropy per symbol of the first-match index for one
/// explicit codebook realization: enumerates every source block, finds its
/// index by scanning `words`, and aggregates the exact pushforward pmf.
/// `words.len()` is the truncation cap; index `cap + 1` encodes truncation.
pub fn brute_index_entropy(
    p_letters: &[f64],
    p_probs: &[f64],
    n: usize,
    words: &[Vec<f64>],
    rho: impl Fn(f64, f64) -> f64,
    level: f64,
) -> Result<f64> {
    let a = p_letters.len();
    if a == 0 || p_letters.len() != p_probs.len() || n == 0 {
        return Err(Error::model("malformed exact index-entropy instance"));
    }
    guard_size(
        "exact source-block enumeration",
        (a as u128).saturating_pow(n as u32),
        INDEX_GUARD,
    )?;
    let cap = words.len();
    let mut index_pmf = vec![0.0_f64; cap + 1];
    let mut block = vec![0usize; n];
    loop {
        let prob: f64 = block.iter().map(|&i| p_probs[i]).product();
        if prob > 0.0 {
            let x: Vec<f64> = block.iter().map(|&i| p_letters[i]).collect();
            let mut index = cap; // slot `cap` holds the truncation symbol
            'scan: for (w_idx, word) in words.iter().enumerate() {
                let mut total = 0.0;
                for (&xi, &yi) in x.iter().zip(word) {
                    total += rho(xi, yi);
                }
                if total / n as f64 <= level {
                    index = w_idx;
                    break 'scan;
                }
            }
            index_pmf[index] += prob;
        }
        // Odometer over source blocks.
        let mut pos = n;
        loop {
            if pos == 0 {
                let h: f64 = index_pmf
                    .iter()
                    .filter(|&&v| v > 0.0)
                    .map(|&v| -v * v.log2())
                    .sum();
                return Ok(h / n as f64);
            }
            pos -= 1;
            block[pos] += 1;
            if block[pos] < a {
                break;
            }
            block[pos] = 0;
        }
    }
}

/// Rate-distortion function of a discrete source by alternating
/// minimization, with an outer bisection on the slope parameter to hit the
/// target level. Returns bits per symbol.
pub fn blahut_rd(p: &[f64], cost: &[Vec<f64>], level: f64) -> Result<f64> {
    let m = p.len();
    let n = cost.first().map_or(0, |r| r.len());
    if m == 0 || n == 0 || cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(Error::model("malformed rate-distortion instance"));
    }
    // Zero rate as soon as one reproduction letter meets the level alone.
    let best_single = (0..n)
        .map(|j| (0..m).map(|i| p[i] * cost[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if level >= best_single {
        return Ok(0.0);
    }
    let d_floor: f64 = (0..m)
        .map(|i| p[i] * cost[i].iter().cloned().fold(f64::INFINITY, f64::min))
        .sum();
    if level <= d_floor + 1e-15 {
        return Err(Error::domain(format!(
            "target level {level} at or below the minimum achievable {d_floor}"
        )));
    }

    // Alternating minimization at fixed slope s < 0 (nats).
    let solve_at = |s: f64| -> (f64, f64) {
        let mut q = vec![1.0 / n as f64; n];
        let mut w = vec![vec![0.0; n]; m];
        for _ in 0..20_000 {
            let mut q_next = vec![0.0; n];
            for i in 0..m {
                let mut z = 0.0;
                for j in 0..n {
                    w[i][j] = q[j] * (s * cost[i][j]).exp();
                    z += w[i][j];
                }
                for j in 0..n {
                    w[i][j] /= z;
                    q_next[j] += p[i] * w[i][j];
                }
            }
            let delta = q
                .iter()
                .zip(&q_next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            q = q_next;
            if delta < 1e-14 {
                break;
            }
        }
        let mut d = 0.0;
        let mut i_nats = 0.0;
        for i in 0..m {
            for j in 0..n {
                let v = p[i] * w[i][j];
                if v > 0.0 {
                    d += v * cost[i][j];
                    i_nats += v * (w[i][j] / q[j]).ln();
                }
            }
        }
        (d, i_nats)
    };

    let mut s_hi = -1e-9;
    let mut s_lo = -1.0;
    while solve_at(s_lo).0 > level {
        s_lo *= 2.0;
        if s_lo < -1e6 {
            return Err(Error::numerical("slope bracket expansion failed"));
        }
    }
    for _ in 0..200 {
        let s = 0.5 * (s_lo + s_hi);
        let (d, _) = solve_at(s);
        if d > level {
            s_hi = s;
        } else {
            s_lo = s;
        }
        if (s_hi - s_lo).abs() < 1e-13 {
            break;
        }
    }
    let s = 0.5 * (s_lo + s_hi);
    let (d, i_nats) = solve_at(s);
    // First-order slope correction for the residual level mismatch.
    let corrected = i_nats + s * (level - d);
    Ok(corrected.max(0.0) / std::f64::consts::LN_2)
}

/// Shared validation for descent instances.
fn check_instance(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> Result<()> {
    let m = p.len();
    let n = q.len();
    if m == 0 || n == 0 || cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(Error::model("instance dimensions are inconsistent"));
    }
    guard_size("descent oracle cells", (m as u128) * (n as u128), CELL_GUARD)?;
    for &v in p.iter().chain(q) {
        if !(0.0..=1.0 + 1e-12).contains(&v) {
            return Err(Error::model("marginals must be probability vectors"));
        }
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::model("marginals must sum to 1"));
    }
    Ok(())
}

/// Projected-gradient descent with backtracking, run to an objective change
/// of 1e-12 nats. Returns the best objective value reached.
fn descend(
    w: &mut [f64],
    objective: &impl Fn(&[f64]) -> f64,
    gradient: &impl Fn(&[f64], &mut [f64]),
    project: &impl Fn(&mut [f64]),
) -> f64 {
    let mut g = vec![0.0; w.len()];
    let mut val = objective(w);
    let mut step = 0.25;
    for _ in 0..20_000 {
        gradient(w, &mut g);
        let mut improved = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(&wi, &gi)| wi - step * gi)
                .collect();
            project(&mut trial);
            let tv = objective(&trial);
            if tv < val {
                let gain = val - tv;
                w.copy_from_slice(&trial);
                val = tv;
                improved = true;
                step = (step * 1.3).min(4.0);
                if gain < 1e-12 {
                    return val;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return val;
            }
        }
        if !improved {
            return val;
        }
    }
    val
}

/// Seeded random starting conditional for restarts (restart 0 starts from
/// the codebook marginal itself).
fn initial_conditional(m: usize, n: usize, q: &[f64], restart: usize, fam: &StreamFamily) -> Vec<f64> {
    if restart == 0 {
        let mut w = Vec::with_capacity(m * n);
        for _ in 0..m {
            w.extend_from_slice(q);
        }
        return w;
    }
    let mut rng = fam.stream(restart as u64);
    let mut w = vec![0.0; m * n];
    for i in 0..m {
        let mut sum = 0.0;
        for j in 0..n {
            let e = -(uniform_half_open::<f64>(&mut rng).max(1e-12).ln());
            w[i * n + j] = e;
            sum += e;
        }
        for j in 0..n {
            w[i * n + j] /= sum;
        }
    }
    w
}

/// Dykstra projection onto {per-row simplex} intersected with the weighted
/// halfspace `<weights, w> <= level`. Rows whose projection is onto the
/// simplex only (p_i = 0 rows get weight 0 anyway) are handled uniformly.
fn dykstra_rows_and_halfspace(
    w: &mut [f64],
    m: usize,
    n: usize,
    weights: &[f64],
    level: f64,
    _q: &[f64],
) {
    let wnorm: f64 = weights.iter().map(|&c| c * c).sum();
    let mut p1 = vec![0.0; w.len()];
    let mut p2 = vec![0.0; w.len()];
    let mut prev = w.to_vec();
    for _ in 0..5_000 {
        // Simplex projection per row, with its correction term.
        for i in 0..m {
            let row = &mut w[i * n..(i + 1) * n];
            for (r, c) in row.iter_mut().zip(&p1[i * n..(i + 1) * n]) {
                *r += *c;
            }
            let before: Vec<f64> = row.to_vec();
            project_simplex(row);
            for j in 0..n {
                p1[i * n + j] = before[j] - row[j];
            }
        }
        // Halfspace projection with its correction term.
        for (wi, ci) in w.iter_mut().zip(&p2) {
            *wi += *ci;
        }
        let dot: f64 = w.iter().zip(weights).map(|(&a, &c)| a * c).sum();
        if dot > level && wnorm > 0.0 {
            let scale = (dot - level) / wnorm;
            for (k, wi) in w.iter_mut().enumerate() {
                let before = *wi;
                *wi -= scale * weights[k];
                p2[k] = before - *wi;
            }
        } else {
            p2.iter_mut().for_each(|c| *c = 0.0);
        }
        let delta = w
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if delta < 1e-15 {
            break;
        }
        prev.copy_from_slice(w);
    }
    // Repair pass: plain alternating projections until the returned point
    // genuinely lies in both sets, so descent never accepts an infeasible
    // objective value. Ends on a row projection; the loop exits only when
    // the halfspace also holds at that point.
    for _ in 0..200_000 {
        for i in 0..m {
            project_simplex(&mut w[i * n..(i + 1) * n]);
        }
        let dot: f64 = w.iter().zip(weights).map(|(&a, &c)| a * c).sum();
        if dot <= level + 1e-12 || wnorm == 0.0 {
            return;
        }
        let scale = (dot - level) / wnorm;
        for (k, wi) in w.iter_mut().enumerate() {
            *wi -= scale * weights[k];
        }
    }
}

/// Dykstra projection onto the transportation polytope (both marginals
/// fixed, nonnegative) intersected with the cost halfspace.
fn dykstra_transport(
    w: &mut [f64],
    m: usize,
    n: usize,
    p: &[f64],
    q: &[f64],
    cost: &[f64],
    level: f64,
) {
    let cnorm: f64 = cost.iter().map(|&c| c * c).sum();
    // Correction terms only for the non-affine sets (nonneg cone and
    // halfspace); affine projections need none in Dykstra's scheme.
    let mut p_cone = vec![0.0; w.len()];
    let mut p_half = vec![0.0; w.len()];
    let mut prev = w.to_vec();
    for _ in 0..5_000 {
        // Row sums to p (affine).
        for i in 0..m {
            let sum: f64 = w[i * n..(i + 1) * n].iter().sum();
            let adjust = (p[i] - sum) / n as f64;
            for j in 0..n {
                w[i * n + j] += adjust;
            }
        }
        // Column sums to q (affine).
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..m {
                sum += w[i * n + j];
            }
            let adjust = (q[j] - sum) / m as f64;
            for i in 0..m {
                w[i * n + j] += adjust;
            }
        }
        // Nonnegativity (cone) with correction.
        for (k, wi) in w.iter_mut().enumerate() {
            *wi += p_cone[k];
            let before = *wi;
            if *wi < 0.0 {
                *wi = 0.0;
            }
            p_cone[k] = before - *wi;
        }
        // Cost halfspace with correction.
        for (k, wi) in w.iter_mut().enumerate() {
            *wi += p_half[k];
        }
        let dot: f64 = w.iter().zip(cost).map(|(&a, &c)| a * c).sum();
        if dot > level && cnorm > 0.0 {
            let scale = (dot - level) / cnorm;
            for (k, wi) in w.iter_mut().enumerate() {
                let before = *wi;
                *wi -= scale * cost[k];
                p_half[k] = before - *wi;
            }
        } else {
            p_half.iter_mut().for_each(|c| *c = 0.0);
        }
        let delta = w
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if delta < 1e-15 {
            break;
        }
        prev.copy_from_slice(w);
    }
    // Repair pass: plain alternating projections until marginal, sign, and
    // cost violations are all negligible, so the objective reported at this
    // point cannot meaningfully undercut the constrained minimum.
    for _ in 0..200_000 {
        for i in 0..m {
            let sum: f64 = w[i * n..(i + 1) * n].iter().sum();
            let adjust = (p[i] - sum) / n as f64;
            for j in 0..n {
                w[i * n + j] += adjust;
            }
        }
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..m {
                sum += w[i * n + j];
            }
            let adjust = (q[j] - sum) / m as f64;
            for i in 0..m {
                w[i * n + j] += adjust;
            }
        }
        let mut neg: f64 = 0.0;
        for wi in w.iter_mut() {
            if *wi < 0.0 {
                neg = neg.max(-*wi);
                *wi = 0.0;
            }
        }
        let dot: f64 = w.iter().zip(cost).map(|(&a, &c)| a * c).sum();
        let mut excess = 0.0;
        if dot > level && cnorm > 0.0 {
            excess = dot - level;
            let scale = excess / cnorm;
            for (k, wi) in w.iter_mut().enumerate() {
                *wi -= scale * cost[k];
            }
        }
        let row_err = (0..m)
            .map(|i| (w[i * n..(i + 1) * n].iter().sum::<f64>() - p[i]).abs())
            .fold(0.0, f64::max);
        if neg < 1e-12 && excess < 1e-12 && row_err < 1e-12 {
            break;
        }
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
            found = true;
        }
    }
    if !found {
        // Should not happen; fall back to uniform.
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
        return;
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Dual value: sup over tilts `l <= 0` of `l * level - Lambda(l)` in nats,
/// located by a 10_000-point sweep and refined by bisection on the
/// derivative.
fn dual_by_sweep(p: &[f64], q: &[f64], cost: &[Vec<f64>], level: f64) -> Result<f64> {
    let log_mgf = |l: f64| -> f64 {
        let mut total = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            let inner: f64 = q
                .iter()
                .zip(&cost[i])
                .filter(|(&qj, _)| qj > 0.0)
                .map(|(&qj, &c)| qj * (l * c).exp())
                .sum();
            total += pi * inner.ln();
        }
        total
    };
    let dlog_mgf = |l: f64| -> f64 {
        let mut total = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            let mut z = 0.0;
            let mut zc = 0.0;
            for (&qj, &c) in q.iter().zip(&cost[i]) {
                if qj > 0.0 {
                    let e = qj * (l * c).exp();
                    z += e;
                    zc += e * c;
                }
            }
            total += pi * zc / z;
        }
        total
    };
    // If even l = 0 has derivative <= level, the supremum is at l = 0.
    if dlog_mgf(0.0) <= level {
        return Ok(0.0);
    }
    let mut lo = -1.0;
    while dlog_mgf(lo) > level {
        lo *= 2.0;
        if lo < -(2.0_f64).powi(60) {
            // Derivative never crosses: supremum approached as l -> -inf.
            break;
        }
    }
    // Sweep for the best grid point of the concave dual.
    let grid = 10_000;
    let mut best_l = 0.0;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..=grid {
        let l = lo * k as f64 / grid as f64;
        let v = l * level - log_mgf(l);
        if v > best_v {
            best_v = v;
            best_l = l;
        }
    }
    // Refine by bisection on the stationarity condition around the best
    // grid point. The log-MGF is convex, so its derivative increases in l:
    // the bracket has dlog_mgf(a) <= level <= dlog_mgf(b).
    let width = -lo / grid as f64;
    let mut a = best_l - width;
    let mut b = (best_l + width).min(0.0);
    if dlog_mgf(a) <= level && dlog_mgf(b) >= level {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if dlog_mgf(mid) >= level {
                b = mid;
            } else {
                a = mid;
            }
        }
        let l = 0.5 * (a + b);
        best_v = best_v.max(l * level - log_mgf(l));
    }
    Ok(best_v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming_cost(m: usize, n: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect()
    }

    #[test]
    fn rate_min_symmetric_binary_matches_closed_form() {
        // P = Q = uniform binary, Hamming, level 0.11:
        // value is 1 - h(0.11) = 0.500084041835472 bits.
        let p = [0.5, 0.5];
        let out = brute_rate_min(&p, &p, &hamming_cost(2, 2), 0.11).unwrap();
        let expect = 0.500_084_041_835_472;
        assert!(
            (out.dual_bits - expect).abs() < 1e-9,
            "dual {} vs {expect}",
            out.dual_bits
        );
        assert!(
            (out.bits - expect).abs() < 1e-6,
            "primal {} vs {expect}",
            out.bits
        );
        // Primal and dual must agree.
        assert!((out.bits - out.dual_bits).abs() < 1e-6);
        // Minimizer meets the level with equality and has X-marginal P.
        let d = out.joint.expected_cost(&hamming_cost(2, 2));
        assert!((d - 0.11).abs() < 1e-8, "E rho = {d}");
        for (got, want) in out.joint.x_marginal().iter().zip(&p) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_min_mismatched_instance_frozen_values() {
        // P = Bern(0.3), Q = Bern(0.9), Hamming, level 0.15. Frozen from an
        // independent high-precision evaluation of the tilted family.
        let p = [0.7, 0.3];
        let q = [0.1, 0.9];
        let out = brute_rate_min(&p, &q, &hamming_cost(2, 2), 0.15).unwrap();
        let expect = 1.369_296_504_873_363_9;
        assert!(
            (out.dual_bits - expect).abs() < 1e-9,
            "dual {} vs {expect}",
            out.dual_bits
        );
        assert!((out.bits - expect).abs() < 1e-6, "primal {}", out.bits);
        // Y-marginal of the minimizer is the tilted output law.
        let ym = out.joint.y_marginal();
        assert!((ym[0] - 0.551_996_457_030_511_4).abs() < 1e-6, "{:?}", ym);
        let d = out.joint.expected_cost(&hamming_cost(2, 2));
        assert!((d - 0.15).abs() < 1e-8, "E rho = {d}");
    }

    #[test]
    fn rate_min_is_zero_above_average_distortion() {
        let p = [0.5, 0.5];
        let out = brute_rate_min(&p, &p, &hamming_cost(2, 2), 0.6).unwrap();
        assert!(out.bits.abs() < 1e-9, "got {}", out.bits);
        assert_eq!(out.dual_bits, 0.0);
    }

    #[test]
    fn rate_min_rejects_unreachable_levels() {
        // Q puts no mass on letter 1, so x = 1 cannot reach cost < 1.
        let p = [0.5, 0.5];
        let q = [1.0, 0.0];
        assert!(matches!(
            brute_rate_min(&p, &q, &hamming_cost(2, 2), 0.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lmi_symmetric_binary_matches_closed_form() {
        let p = [0.5, 0.5];
        let v = brute_lmi(&p, &p, &hamming_cost(2, 2), 0.11).unwrap();
        let expect = 0.500_084_041_835_472;
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
    }

    #[test]
    fn lmi_zero_when_product_coupling_feasible() {
        let p = [0.5, 0.5];
        let v = brute_lmi(&p, &p, &hamming_cost(2, 2), 0.5).unwrap();
        assert!(v.abs() < 1e-8, "got {v}");
    }

    #[test]
    fn lmi_rejects_infeasible_level() {
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        assert!(matches!(
            brute_lmi(&p, &q, &hamming_cost(2, 2), 0.3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ball_prob_at_zero_level_is_point_mass() {
        let x = [0.0, 1.0, 1.0, 0.0];
        let letters = [0.0, 1.0];
        let probs = [0.4, 0.6];
        let v = brute_ball_prob(
            &x,
            &letters,
            &probs,
            |a, b| if a == b { 0.0 } else { 1.0 },
            0.0,
        )
        .unwrap();
        assert!((v - 0.4 * 0.6 * 0.6 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn ball_prob_single_letter_is_direct_sum() {
        let x = [0.5];
        let letters = [0.0, 0.4, 2.0];
        let probs = [0.2, 0.5, 0.3];
        // squared error, level 0.05: letters within |y - 0.5| <= sqrt(0.05)
        let v = brute_ball_prob(&x, &letters, &probs, |a, b| (a - b) * (a - b), 0.05).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "only y = 0.4 is inside, got {v}");
    }

    #[test]
    fn ball_prob_uniform_codebook_counts_words() {
        // Uniform binary codebook: probability is |ball| / 2^n.
        let x = [0.0; 12];
        let letters = [0.0, 1.0];
        let probs = [0.5, 0.5];
        let v = brute_ball_prob(
            &x,
            &letters,
            &probs,
            |a, b| if a == b { 0.0 } else { 1.0 },
            0.25,
        )
        .unwrap();
        // words within Hamming radius 3 of a fixed center: 1 + 12 + 66 + 220
        let count = 299.0;
        assert!((v - count / 4096.0).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn ball_guard_trips() {
        let x = vec![0.0; 30];
        let letters = [0.0, 1.0];
        let probs = [0.5, 0.5];
        assert!(matches!(
            brute_ball_prob(&x, &letters, &probs, |_, _| 0.0, 1.0),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn index_entropy_zero_when_first_word_matches_everything() {
        let letters = [0.0, 1.0];
        let probs = [0.3, 0.7];
        let words = vec![vec![0.0, 0.0, 0.0]];
        let h = brute_index_entropy(
            &letters,
            &probs,
            3,
            &words,
            |_, _| 0.0, // zero distortion everywhere: word 1 always matches
            0.5,
        )
        .unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn index_entropy_of_identity_map_is_source_entropy() {
        // n = 1, codebook enumerates both letters, level 0: index mirrors x.
        let letters = [0.0, 1.0];
        let probs = [0.3, 0.7];
        let words = vec![vec![0.0], vec![1.0]];
        let h = brute_index_entropy(
            &letters,
            &probs,
            1,
            &words,
            |a, b| if a == b { 0.0 } else { 1.0 },
            0.0,
        )
        .unwrap();
        let expect = -(0.3_f64.log2() * 0.3 + 0.7_f64.log2() * 0.7);
        assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn blahut_matches_binary_closed_form() {
        // R(D) = h(p) - h(D) for Bern(p) with Hamming distortion, D < p.
        let p = [0.7, 0.3];
        let r = blahut_rd(&p, &hamming_cost(2, 2), 0.15).unwrap();
        let expect = 0.271_450_594_514_292_2;
        assert!((r - expect).abs() < 1e-7, "{r} vs {expect}");
    }

    #[test]
    fn blahut_zero_beyond_trivial_level() {
        let p = [0.7, 0.3];
        // choosing the majority letter alone costs 0.3
        let r = blahut_rd(&p, &hamming_cost(2, 2), 0.31).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rate_min_dominates_lmi_dominates_blahut() {
        // Ordering at a mismatched codebook: rate >= lmi at the tilted
        // output law >= rate-distortion function.
        let p = [0.7, 0.3];
        let q = [0.1, 0.9];
        let cost = hamming_cost(2, 2);
        let rate = brute_rate_min(&p, &q, &cost, 0.15).unwrap();
        let qs = rate.joint.y_marginal();
        let lmi = brute_lmi(&p, &qs, &cost, 0.15).unwrap();
        let rd = blahut_rd(&p, &cost, 0.15).unwrap();
        assert!(rate.bits >= lmi - 1e-7, "{} vs {lmi}", rate.bits);
        assert!(lmi >= rd - 1e-7, "{lmi} vs {rd}");
    }
}
