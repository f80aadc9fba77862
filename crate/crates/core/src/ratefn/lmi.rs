//! Lowest mutual information over couplings with both marginals pinned.
//!
//! Solves `min I(X; Y)` over joint laws with source marginal P, output
//! marginal Q-tilde, and mean distortion at most a target level. The inner
//! problem at a fixed distortion multiplier is an entropic projection
//! computed by alternating potential updates in log space; an outer
//! bisection moves the multiplier until the distortion constraint binds.

use crate::distortion::Distortion;
use crate::distributions::DiscreteDistribution;
use crate::error::{guard_size, Error, Result};
use crate::numeric::logsumexp;
use crate::oracle::transport::min_transport_cost;
use crate::scalar::Scalar;

/// Cap on `|support(P)| * |support(Q)|` for the coupling solver.
const CELL_GUARD: u128 = 1_000_000;
/// Convergence threshold on the objective between potential sweeps, bits.
const OBJECTIVE_TOL: f64 = 1e-9;
/// Hard cap on potential sweeps at one multiplier.
const MAX_SWEEPS: usize = 50_000;

/// Minimal mutual information in bits for couplings of `p` and `q_tilde`
/// with mean distortion at most `level`. Levels at or above the product
/// average need no constraint and give zero; levels below the optimal
/// transport cost are infeasible.
pub fn lmi_direct<S: Scalar>(
    p: &DiscreteDistribution<S>,
    q_tilde: &DiscreteDistribution<S>,
    distortion: &Distortion<S>,
    level: S,
) -> Result<S> {
    let m = p.len();
    let n = q_tilde.len();
    guard_size("coupling cells", (m as u128) * (n as u128), CELL_GUARD)?;
    if !(level.is_finite() && level >= S::zero()) {
        return Err(Error::domain(format!(
            "distortion level must be finite and nonnegative, got {level}"
        )));
    }
    let cost = distortion.matrix(p.support(), q_tilde.support())?;
    let pv: Vec<f64> = p.probs().iter().map(|v| v.as_f64()).collect();
    let qv: Vec<f64> = q_tilde.probs().iter().map(|v| v.as_f64()).collect();
    let cm: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|v| v.as_f64()).collect())
        .collect();
    let d = level.as_f64();

    // Unconstrained product coupling already meets loose levels.
    let mut d_av = 0.0;
    for (i, &pi) in pv.iter().enumerate() {
        for (j, &qj) in qv.iter().enumerate() {
            d_av += pi * qj * cm[i][j];
        }
    }
    if d >= d_av {
        return Ok(S::zero());
    }
    // Feasibility floor: the cheapest coupling with both marginals pinned.
    let floor = min_transport_cost(&pv, &qv, &cm)?;
    if d < floor - 1e-12 {
        return Err(Error::domain(format!(
            "level {d} is below the optimal transport cost {floor}: no feasible coupling"
        )));
    }

    let solver = Sinkhorn {
        p: pv,
        q: qv,
        cost: cm,
    };
    // The mean distortion of the entropic coupling increases with the
    // multiplier toward d_av at zero; expand the lower end until it
    // brackets the level.
    let mut lo = -1.0_f64;
    let mut state = solver.solve(lo)?;
    let mut guard = 0;
    while state.mean_cost > d {
        lo *= 2.0;
        if lo < -1.1e18 {
            return Err(Error::numerical(format!(
                "distortion multiplier ran past {lo:.3e} without reaching level {d}"
            )));
        }
        state = solver.solve(lo)?;
        guard += 1;
        if guard > 80 {
            return Err(Error::numerical(
                "multiplier bracket expansion failed to converge",
            ));
        }
    }
    let mut hi = 0.0_f64;
    // Bisect: mean cost is monotone in the multiplier. Ties resolve toward
    // the smaller magnitude because the upper half of the bracket survives
    // whenever it already meets the level.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let trial = solver.solve(mid)?;
        if trial.mean_cost > d {
            hi = mid;
            state = trial;
        } else {
            lo = mid;
            state = trial;
        }
        if (state.mean_cost - d).abs() <= 1e-12 * (1.0 + d_av) || (hi - lo).abs() < 1e-13 * (1.0 + lo.abs()) {
            break;
        }
    }
    // First-order correction moves the objective from the realized mean
    // cost onto the target level; the multiplier is the slope.
    let corrected = state.mi_nats + state.multiplier * (d - state.mean_cost);
    Ok(S::of(corrected.max(0.0) / std::f64::consts::LN_2))
}

struct Sinkhorn {
    p: Vec<f64>,
    q: Vec<f64>,
    cost: Vec<Vec<f64>>,
}

struct SinkhornState {
    multiplier: f64,
    mean_cost: f64,
    mi_nats: f64,
}

impl Sinkhorn {
    /// Entropic projection at a fixed multiplier `s <= 0`: alternately
    /// renormalize rows and columns in log space until the mutual
    /// information stabilizes.
    fn solve(&self, s: f64) -> Result<SinkhornState> {
        let m = self.p.len();
        let n = self.q.len();
        let ln_p: Vec<f64> = self.p.iter().map(|&v| safe_ln(v)).collect();
        let ln_q: Vec<f64> = self.q.iter().map(|&v| safe_ln(v)).collect();
        let mut alpha = vec![0.0_f64; m];
        let mut beta = vec![0.0_f64; n];
        let mut last_obj = f64::INFINITY;
        for sweep in 0..MAX_SWEEPS {
            for (i, a) in alpha.iter_mut().enumerate() {
                if self.p[i] == 0.0 {
                    *a = f64::NEG_INFINITY;
                    continue;
                }
                let terms: Vec<f64> = (0..n)
                    .map(|j| ln_q[j] + s * self.cost[i][j] + beta[j])
                    .collect();
                *a = -logsumexp(&terms);
            }
            for (j, b) in beta.iter_mut().enumerate() {
                if self.q[j] == 0.0 {
                    *b = f64::NEG_INFINITY;
                    continue;
                }
                let terms: Vec<f64> = (0..m)
                    .map(|i| ln_p[i] + s * self.cost[i][j] + alpha[i])
                    .collect();
                *b = -logsumexp(&terms);
            }
            let (obj, _, col_err) = self.evaluate(s, &alpha, &beta);
            let done = (last_obj - obj).abs() <= OBJECTIVE_TOL * std::f64::consts::LN_2
                && col_err <= 1e-10;
            last_obj = obj;
            if done {
                break;
            }
            if sweep + 1 == MAX_SWEEPS {
                return Err(Error::numerical(format!(
                    "coupling projection did not converge at multiplier {s}"
                )));
            }
        }
        let (mi_nats, mean_cost, _) = self.evaluate(s, &alpha, &beta);
        Ok(SinkhornState {
            multiplier: s,
            mean_cost,
            mi_nats,
        })
    }

    /// Objective, mean cost, and column-marginal error of the coupling
    /// defined by the potentials.
    fn evaluate(&self, s: f64, alpha: &[f64], beta: &[f64]) -> (f64, f64, f64) {
        let m = self.p.len();
        let n = self.q.len();
        let mut mi = 0.0;
        let mut mean = 0.0;
        let mut col = vec![0.0_f64; n];
        for i in 0..m {
            if self.p[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if self.q[j] == 0.0 {
                    continue;
                }
                let lw =
                    safe_ln(self.p[i]) + safe_ln(self.q[j]) + s * self.cost[i][j] + alpha[i] + beta[j];
                let w = lw.exp();
                if w > 0.0 {
                    // ln(w / (p q)) collapses to the potential part.
                    mi += w * (s * self.cost[i][j] + alpha[i] + beta[j]);
                    mean += w * self.cost[i][j];
                    col[j] += w;
                }
            }
        }
        let col_err = col
            .iter()
            .zip(&self.q)
            .map(|(c, q)| (c - q).abs())
            .fold(0.0, f64::max);
        (mi.max(0.0), mean, col_err)
    }
}

fn safe_ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}
