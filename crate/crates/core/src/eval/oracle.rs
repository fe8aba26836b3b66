use serde::{Deserialize, Serialize};

use crate::gnn::GnnModel;
use crate::graphdata::Graph;
use crate::{Error, Result};

/// Exhaustive search refuses graphs with more edges than this.
pub const ORACLE_MAX_EDGES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Ascending edge ids of the best subset.
    pub edges: Vec<usize>,
    pub probability: f64,
}

/// `P_f[target]` with the edges outside `hard` removed (nodes stay).
pub fn hard_mask_probability(model: &GnnModel, graph: &Graph, hard: &[bool], target: usize) -> Result<f64> {
    let w: Vec<f64> = hard.iter().map(|&b| f64::from(u8::from(b))).collect();
    let p = model.predict(graph, Some(&w))?;
    p.probs.get(target).copied().ok_or_else(|| Error::domain(format!("class {target} out of range")))
}

/// The edge subset of size at most `k` maximizing `P_f[target]`, ties going
/// to the lexicographically smallest id list. With `connected_only`, only
/// subsets forming one connected piece are considered.
pub fn brute_force_best_subgraph(model: &GnnModel, graph: &Graph, k: usize, target: usize, connected_only: bool) -> Result<OracleResult> {
    let m = graph.num_edges();
    if m > ORACLE_MAX_EDGES {
        return Err(Error::Refused(format!(
            "oracle refuses {m} edges (cap {ORACLE_MAX_EDGES})"
        )));
    }
    let mut best: Option<OracleResult> = None;
    for bits in 0u32..(1u32 << m) {
        if bits.count_ones() as usize > k {
            continue;
        }
        let ids: Vec<usize> = (0..m).filter(|&i| bits >> i & 1 == 1).collect();
        if connected_only && !graph.edges_connected(&ids) {
            continue;
        }
        let hard: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
        let p = hard_mask_probability(model, graph, &hard, target)?;
        let better = match &best {
            None => true,
            Some(b) => p > b.probability || (p == b.probability && ids < b.edges),
        };
        if better {
            best = Some(OracleResult { edges: ids, probability: p });
        }
    }
    Ok(best.expect("the empty subset is always feasible"))
}
