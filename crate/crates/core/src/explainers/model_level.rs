use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::maskgen::{edge_probs, train_on};
use super::{ExplainerConfig, Family, TrainedExplainer};
use crate::constraints::top_k_indices;
use crate::gnn::GnnModel;
use crate::graphdata::{canonical_form, CanonicalForm, Dataset, Graph, Split};
use crate::{Error, Result};

/// The most frequent per-instance explanation of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLevelExplanation {
    pub class: usize,
    /// The modal subgraph, nodes relabeled from zero.
    pub graph: Graph,
    /// Instances whose explanation has this shape.
    pub support: usize,
    pub instances: usize,
    /// The frozen model's prediction on `graph` alone.
    pub predicted_label: usize,
}

fn class_graphs(dataset: &Dataset, class: usize, split: Option<Split>) -> Vec<&Graph> {
    dataset
        .graphs
        .iter()
        .zip(&dataset.split)
        .filter(|(g, s)| g.label == Some(class) && g.num_edges() > 0 && split.is_none_or(|want| **s == Some(want)))
        .map(|(g, _)| g)
        .collect()
}

/// Mask generator shared across the training graphs of the target class,
/// all pushed toward that class.
pub(crate) fn train(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<TrainedExplainer> {
    let c = config.target_class;
    if c >= model.config.num_classes {
        return Err(Error::domain(format!("class {c} out of {}", model.config.num_classes)));
    }
    let split = dataset.has_split().then_some(Split::Train);
    let graphs = class_graphs(dataset, c, split);
    if graphs.is_empty() {
        return Err(Error::domain(format!("no training graphs of class {c}")));
    }
    let mut te = train_on(model, &graphs, vec![c; graphs.len()], config, false)?;
    te.config.family = Family::ModelLevel;
    Ok(te)
}

/// Votes over the top-`config.budget` explanations of every class graph in
/// `dataset` and returns the most frequent shape. Ties go to the smaller
/// canonical form.
pub fn model_level_vote(te: &TrainedExplainer, model: &GnnModel, dataset: &Dataset) -> Result<ModelLevelExplanation> {
    let c = te.config.target_class;
    let graphs = class_graphs(dataset, c, None);
    if graphs.is_empty() {
        return Err(Error::domain(format!("no graphs of class {c}")));
    }
    let mut votes: BTreeMap<CanonicalForm, (usize, Graph)> = BTreeMap::new();
    for g in &graphs {
        let w = edge_probs(te, model, g)?;
        let sub = g.edge_subgraph(&top_k_indices(&w, te.config.budget));
        let form = canonical_form(sub.num_nodes, &sub.edges);
        votes.entry(form).or_insert((0, sub)).0 += 1;
    }
    let (support, graph) = votes
        .into_values()
        .fold(None::<(usize, Graph)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .expect("at least one vote");
    let predicted_label = model.predict(&graph, None)?.label;
    Ok(ModelLevelExplanation {
        class: c,
        graph,
        support,
        instances: graphs.len(),
        predicted_label,
    })
}

/// Trains the shared generator on class `config.target_class` and returns
/// it with the voted model-level explanation.
pub fn model_level_generate(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<(TrainedExplainer, ModelLevelExplanation)> {
    let config = ExplainerConfig {
        family: Family::ModelLevel,
        ..config.clone()
    };
    config.validate()?;
    let te = train(model, dataset, &config)?;
    let ml = model_level_vote(&te, model, dataset)?;
    Ok((te, ml))
}
