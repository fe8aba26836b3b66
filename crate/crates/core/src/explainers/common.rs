use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use crate::gnn::GnnModel;
use crate::graphdata::Graph;
use crate::tensor::{glorot_uniform, ParamStore, Tape, Tensor, Var};
use crate::{Result, Rng};

pub(crate) type Bound = BTreeMap<String, Var>;

pub(crate) fn bind_store(tape: &mut Tape, store: &ParamStore, trainable: bool) -> Bound {
    store
        .iter()
        .map(|(n, t)| {
            let v = if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            };
            (n.clone(), v)
        })
        .collect()
}

/// Adds a ReLU MLP `dims[0] → … → dims[last]` under `prefix`.
pub(crate) fn mlp_init(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut Rng) -> Result<()> {
    for (i, w) in dims.windows(2).enumerate() {
        store.insert(format!("{prefix}.w{i}"), glorot_uniform(w[0], w[1], rng)?);
        store.insert(format!("{prefix}.b{i}"), Tensor::zeros(&[w[1]])?);
    }
    Ok(())
}

pub(crate) fn mlp_forward(tape: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let mut h = x;
    let mut i = 0;
    while let Some(&w) = p.get(&format!("{prefix}.w{i}")) {
        if i > 0 {
            h = tape.relu(h)?;
        }
        h = tape.matmul(h, w)?;
        h = tape.add_row(h, p[&format!("{prefix}.b{i}")])?;
        i += 1;
    }
    Ok(h)
}

/// `[h_u, h_v]` rows for every edge from the frozen model's last-layer
/// node embeddings (`num_edges × 2·hidden`).
pub(crate) fn raw_edge_features(model: &GnnModel, graph: &Graph) -> Result<Vec<f64>> {
    let emb = model.node_embeddings(graph)?;
    let d = emb.shape()[1];
    let x = emb.data();
    let mut out = Vec::with_capacity(graph.num_edges() * 2 * d);
    for &(u, v) in &graph.edges {
        out.extend_from_slice(&x[u * d..(u + 1) * d]);
        out.extend_from_slice(&x[v * d..(v + 1) * d]);
    }
    Ok(out)
}

/// Column statistics stored alongside explainer weights so inputs are
/// standardized identically at training and inference.
pub(crate) fn fit_normalizer(store: &mut ParamStore, rows: &[Vec<f64>], width: usize) -> Result<()> {
    let mut mean = vec![0.0; width];
    let mut sq = vec![0.0; width];
    let mut n = 0usize;
    for r in rows {
        for row in r.chunks(width) {
            for k in 0..width {
                mean[k] += row[k];
                sq[k] += row[k] * row[k];
            }
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let scale: Vec<f64> = (0..width)
        .map(|k| {
            let m = mean[k] / n;
            let var = (sq[k] / n - m * m).max(0.0);
            1.0 / var.sqrt().max(1e-6)
        })
        .collect();
    let mean: Vec<f64> = mean.iter().map(|m| m / n).collect();
    store.insert("norm.mean", Tensor::vector(mean)?);
    store.insert("norm.scale", Tensor::vector(scale)?);
    Ok(())
}

/// Standardized edge features as a plain `num_edges × width` tensor.
pub(crate) fn edge_features(model: &GnnModel, store: &ParamStore, graph: &Graph) -> Result<Tensor> {
    let raw = raw_edge_features(model, graph)?;
    normalize(store, raw, graph.num_edges())
}

pub(crate) fn normalize(store: &ParamStore, mut raw: Vec<f64>, rows: usize) -> Result<Tensor> {
    let mean = store.get("norm.mean").expect("normalizer present").data();
    let scale = store.get("norm.scale").expect("normalizer present").data();
    let w = mean.len();
    for row in raw.chunks_mut(w) {
        for k in 0..w {
            row[k] = (row[k] - mean[k]) * scale[k];
        }
    }
    Ok(Tensor::new(vec![rows, w], raw)?)
}

/// Stable per-graph stream id, so per-instance randomness does not depend
/// on the order in which graphs are processed.
pub(crate) fn graph_stream(graph: &Graph) -> u64 {
    // FNV-1a over the edge list keeps the value identical across platforms.
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    graph.num_nodes.hash(&mut h);
    graph.edges.hash(&mut h);
    h.finish()
}

struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Indices of the `k` largest entries, largest first; ties to the lower index.
pub(crate) fn argsort_desc(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

/// Edge weights that rank a trajectory first (in step order) and every other
/// edge below it by its score, so top-K extraction reproduces the trajectory.
pub(crate) fn trajectory_weights(num_edges: usize, trajectory: &[usize], scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| 0.5 * (s / max).clamp(0.0, 1.0) * 0.999).collect();
    let len = trajectory.len().max(1) as f64;
    for (step, &e) in trajectory.iter().enumerate() {
        w[e] = 1.0 - 0.5 * step as f64 / len;
    }
    debug_assert_eq!(w.len(), num_edges);
    w
}
