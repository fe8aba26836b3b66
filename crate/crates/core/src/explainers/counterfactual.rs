use serde::{Deserialize, Serialize};

use super::common::argsort_desc;
use super::maskgen::{edge_probs, runner_up};
use super::{ExplanationMask, Family, TrainedExplainer};
use crate::gnn::GnnModel;
use crate::graphdata::Graph;
use crate::{Error, Result};

/// An edge deletion that changes (or tries to change) the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualExplanation {
    /// Deletion probability per edge.
    pub deletion_weights: Vec<f64>,
    /// Deleted edge ids, ascending.
    pub deleted: Vec<usize>,
    /// `true` for every edge kept in the counterfactual graph.
    pub retained: Vec<bool>,
    pub original_label: usize,
    pub target_label: usize,
    pub counterfactual_label: usize,
}

impl CounterfactualExplanation {
    pub fn flipped(&self) -> bool {
        self.counterfactual_label != self.original_label
    }

    pub fn retained_fraction(&self) -> f64 {
        if self.retained.is_empty() {
            return 1.0;
        }
        self.retained.iter().filter(|&&b| b).count() as f64 / self.retained.len() as f64
    }

    /// The deletion set viewed as an explanation mask.
    pub fn as_mask(&self) -> ExplanationMask {
        ExplanationMask {
            edge_weights: self.deletion_weights.clone(),
            hard_edges: Some(self.retained.iter().map(|&b| !b).collect()),
            target_label: self.target_label,
        }
    }
}

/// Deletes edges in order of deletion probability, stopping at the first
/// prefix that changes the prediction and never exceeding `k` deletions.
pub fn explain_counterfactual(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, k: usize) -> Result<CounterfactualExplanation> {
    if te.family() != Family::Counterfactual {
        return Err(Error::domain(format!("{} explainer cannot produce counterfactuals", te.family())));
    }
    if model.config.num_classes < 2 {
        return Err(Error::domain("counterfactual explanations need a model with at least two classes"));
    }
    let original = model.predict(graph, None)?;
    let target = runner_up(&original.probs, original.label);
    let weights = edge_probs(te, model, graph)?;
    let order = argsort_desc(&weights);
    let budget = k.min(graph.num_edges());
    let mut keep = vec![true; graph.num_edges()];
    let mut label = original.label;
    if budget > 0 {
        let candidates: Vec<Vec<f64>> = (1..=budget)
            .map(|n| {
                let mut w = vec![1.0; graph.num_edges()];
                for &e in &order[..n] {
                    w[e] = 0.0;
                }
                w
            })
            .collect();
        let graphs = vec![graph; budget];
        let preds = model.predict_many(&graphs, Some(&candidates))?;
        let n = preds.iter().position(|p| p.label != original.label).map_or(budget, |i| i + 1);
        for &e in &order[..n] {
            keep[e] = false;
        }
        label = preds[n - 1].label;
    }
    let mut deleted: Vec<usize> = (0..keep.len()).filter(|&e| !keep[e]).collect();
    deleted.sort_unstable();
    Ok(CounterfactualExplanation {
        deletion_weights: weights,
        deleted,
        retained: keep,
        original_label: original.label,
        target_label: target,
        counterfactual_label: label,
    })
}
