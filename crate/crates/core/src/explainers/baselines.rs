use rand::Rng as _;

use super::common::graph_stream;
use super::ExplanationMask;
use crate::gnn::{GnnModel, GraphBatch};
use crate::graphdata::Graph;
use crate::tensor::{Tape, Tensor};
use crate::{derive_seed, rng_from_seed, Error, Result};

/// `∂ logit[class] / ∂ w_e` for every edge at the given edge weights.
pub fn edge_weight_gradient(model: &GnnModel, graph: &Graph, weights: &[f64], class: usize) -> Result<Vec<f64>> {
    if graph.num_edges() == 0 {
        return Ok(Vec::new());
    }
    if class >= model.config.num_classes {
        return Err(Error::domain(format!("class {class} out of {}", model.config.num_classes)));
    }
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, false);
    let batch = GraphBatch::new(&[graph])?;
    let w = tape.param(Tensor::vector(weights.to_vec())?);
    let out = model.forward(&mut tape, &p, &batch, Some(w))?;
    let flat = tape.reshape(out.logits, vec![model.config.num_classes])?;
    let picked = tape.gather(flat, &[class])?;
    let y = tape.sum(picked, None)?;
    Ok(tape.backward(y)?.wrt(w).into_data())
}

/// Gradient magnitude of the predicted logit, min-max normalized.
///
/// All-zero gradients give uniform weights of 0.5; equal non-zero
/// gradients give all ones.
pub fn explain_saliency(model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
    let target = model.predict(graph, None)?.label;
    let g: Vec<f64> = edge_weight_gradient(model, graph, &vec![1.0; graph.num_edges()], target)?
        .into_iter()
        .map(f64::abs)
        .collect();
    let max = g.iter().copied().fold(0.0, f64::max);
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let weights = if max == 0.0 {
        vec![0.5; g.len()]
    } else if max == min {
        vec![1.0; g.len()]
    } else {
        g.iter().map(|x| (x - min) / (max - min)).collect()
    };
    Ok(ExplanationMask::with_budget(weights, k, target))
}

/// Uniform random weights; the stream depends on `seed` and the graph only.
/// The target is the graph's label (0 if unlabeled).
pub fn explain_random(graph: &Graph, k: usize, seed: u64) -> ExplanationMask {
    let mut rng = rng_from_seed(derive_seed(seed, graph_stream(graph)));
    let weights = (0..graph.num_edges()).map(|_| rng.random::<f64>()).collect();
    ExplanationMask::with_budget(weights, k, graph.label.unwrap_or(0))
}
