//! Exact minimum-cost transportation between two finite distributions,
//! used to decide feasibility of distortion constraints: the constraint
//! `E rho <= D` over couplings with both marginals fixed is satisfiable
//! iff the minimal transport cost is at most `D`.

use crate::error::{Error, Result};

/// Minimal expected cost over all couplings of `p` (rows) and `q` (columns)
/// with cost matrix `cost[i][j]`. Successive shortest augmenting paths on
/// the bipartite network; exact up to floating-point accumulation.
pub fn min_transport_cost(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    let m = p.len();
    let n = q.len();
    if m == 0 || n == 0 || cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(Error::model("transport instance dimensions are inconsistent"));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if (sp - 1.0).abs() > 1e-9 || (sq - 1.0).abs() > 1e-9 {
        return Err(Error::model("transport marginals must each sum to 1"));
    }
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let mut flow = vec![vec![0.0_f64; n]; m];
    // Total remaining mass to route.
    let mut remaining: f64 = 1.0;
    // Node indexing for path search: 0..m are sources, m..m+n are sinks.
    let nodes = m + n;
    let mass_eps = 1e-15;
    while remaining > 1e-12 {
        // Bellman-Ford from the set of sources with remaining supply.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred: Vec<Option<(usize, bool)>> = vec![None; nodes]; // (peer, forward?)
        for i in 0..m {
            if supply[i] > mass_eps {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..m {
                if dist[i] == f64::INFINITY {
                    continue;
                }
                for j in 0..n {
                    // Forward edge: add flow i -> j.
                    let nd = dist[i] + cost[i][j];
                    if nd < dist[m + j] - 1e-15 {
                        dist[m + j] = nd;
                        pred[m + j] = Some((i, true));
                        changed = true;
                    }
                }
            }
            for j in 0..n {
                if dist[m + j] == f64::INFINITY {
                    continue;
                }
                for i in 0..m {
                    // Backward edge: cancel existing flow i -> j.
                    if flow[i][j] > mass_eps {
                        let nd = dist[m + j] - cost[i][j];
                        if nd < dist[i] - 1e-15 {
                            dist[i] = nd;
                            pred[i] = Some((j, false));
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // Cheapest reachable sink with remaining demand.
        let mut best: Option<usize> = None;
        for j in 0..n {
            if demand[j] > mass_eps && dist[m + j] < f64::INFINITY {
                if best.is_none_or(|b| dist[m + j] < dist[m + b]) {
                    best = Some(j);
                }
            }
        }
        let Some(t) = best else {
            return Err(Error::numerical(
                "transport search found no augmenting path; marginals inconsistent",
            ));
        };
        // Trace the path back to a source, collecting the bottleneck.
        let mut path: Vec<(usize, usize, bool)> = Vec::new(); // (i, j, forward)
        let mut node = m + t;
        let mut bottleneck = demand[t];
        loop {
            match pred[node] {
                Some((peer, true)) if node >= m => {
                    // forward edge peer(source) -> node(sink)
                    path.push((peer, node - m, true));
                    node = peer;
                    if pred[node].is_none() {
                        bottleneck = bottleneck.min(supply[node]);
                        break;
                    }
                }
                Some((peer, false)) if node < m => {
                    // backward edge: node(source) <- peer(sink) cancel
                    path.push((node, peer, false));
                    bottleneck = bottleneck.min(flow[node][peer]);
                    node = m + peer;
                }
                None => {
                    bottleneck = bottleneck.min(supply[node]);
                    break;
                }
                _ => {
                    return Err(Error::numerical("transport path trace corrupted"));
                }
            }
        }
        // Apply augmentation.
        for &(i, j, forward) in &path {
            if forward {
                flow[i][j] += bottleneck;
            } else {
                flow[i][j] -= bottleneck;
            }
        }
        // The path starts at `node` (a source) and ends at sink t.
        supply[node] -= bottleneck;
        demand[t] -= bottleneck;
        remaining -= bottleneck;
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            total += flow[i][j] * cost[i][j];
        }
    }
    Ok(total)
}
