//! Geodesic distances over the nonzero-rate graph, state-space
//! diameter, and the order prediction they imply.

use std::collections::VecDeque;

use crate::model::DenseGenerator;

use super::{AnalysisError, CommutatorReport};

/// Distance marker for unreachable pairs.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct ConnectivityReport {
    /// dist[i][j] = shortest directed path length from i to j through
    /// positive-rate edges; `UNREACHABLE` when no path exists.
    pub dist: Vec<Vec<u32>>,
    /// Largest finite distance.
    pub diameter: u32,
    /// min(diameter, p): the effective support radius of the scheme's
    /// leading error term.
    pub k_hat: u32,
}

/// BFS from every state over edges {(i,j): q(i,j) > 0, i != j}.
pub fn connectivity(gen: &DenseGenerator, p: u32) -> ConnectivityReport {
    let n = gen.n_states();
    let mut dist = vec![vec![UNREACHABLE; n]; n];
    let mut diameter = 0u32;
    for start in 0..n {
        let row = &mut dist[start];
        row[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let d = row[i];
            for j in 0..n {
                if i != j && row[j] == UNREACHABLE && gen.q(i, j) > 0.0 {
                    row[j] = d + 1;
                    diameter = diameter.max(d + 1);
                    queue.push_back(j);
                }
            }
        }
    }
    ConnectivityReport { dist, diameter, k_hat: diameter.min(p) }
}

/// Predicted exponent of the normalized RER: 2p - (k_hat + 1), valid
/// only when some pair at distance k_hat carries a nonzero commutator
/// entry (checked against the Richardson residual noise floor).
pub fn predict_order(
    report: &ConnectivityReport,
    c: &CommutatorReport,
) -> Result<u32, AnalysisError> {
    let n = c.c.n();
    let threshold = (10.0 * c.residual).max(1e-10);
    let mut found = false;
    'outer: for i in 0..n {
        for j in 0..n {
            if report.dist[i][j] == report.k_hat && c.c.get(i, j).abs() > threshold {
                found = true;
                break 'outer;
            }
        }
    }
    if !found {
        return Err(AnalysisError::CommutatorHypothesisFailed);
    }
    Ok(2 * c.p - (report.k_hat + 1))
}
