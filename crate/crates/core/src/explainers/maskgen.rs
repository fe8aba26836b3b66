use rand::seq::SliceRandom;

use super::common::{bind_store, edge_features, fit_normalizer, graph_stream, mlp_forward, mlp_init, normalize, raw_edge_features, Bound};
use super::{gumbel_sample, gumbel_sample_tape, train_graphs, uniform_noise, ExplainerConfig, ExplanationMask, LossRecord, TrainedExplainer};
use crate::gnn::{GnnModel, GraphBatch};
use crate::graphdata::{Dataset, Graph};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::{derive_seed, rng_from_seed, Error, Result};

/// Initial probability of keeping an edge.
const INITIAL_KEEP: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Objective {
    /// Keep the model's own prediction.
    Factual,
    /// Reach the runner-up class on the retained graph.
    Counterfactual,
}

/// Runner-up class of a probability vector; ties go to the lower index.
pub(crate) fn runner_up(probs: &[f64], top: usize) -> usize {
    let mut best: Option<usize> = None;
    for (i, &p) in probs.iter().enumerate() {
        if i != top && best.is_none_or(|b| p > probs[b]) {
            best = Some(i);
        }
    }
    best.expect("at least two classes")
}

pub(crate) fn train(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig, objective: Objective) -> Result<TrainedExplainer> {
    let idx = train_graphs(dataset)?;
    if objective == Objective::Counterfactual && model.config.num_classes < 2 {
        return Err(Error::domain("counterfactual explanations need a model with at least two classes"));
    }
    let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs[i]).filter(|g| g.num_edges() > 0).collect();
    let preds = model.predict_many(&graphs, None)?;
    let targets = preds
        .iter()
        .map(|p| match objective {
            Objective::Factual => p.label,
            Objective::Counterfactual => runner_up(&p.probs, p.label),
        })
        .collect();
    train_on(model, &graphs, targets, config, objective == Objective::Counterfactual)
}

/// Fits a mask generator so that masked graphs (or, for counterfactuals,
/// graphs with the masked edges removed) are classified as `targets`.
pub(crate) fn train_on(
    model: &GnnModel,
    graphs: &[&Graph],
    targets: Vec<usize>,
    config: &ExplainerConfig,
    delete: bool,
) -> Result<TrainedExplainer> {
    if graphs.is_empty() {
        return Err(Error::domain("no training graphs with edges"));
    }
    let mut rng = rng_from_seed(config.seed);
    let width = 2 * model.config.hidden_dim;
    let raw: Vec<Vec<f64>> = graphs.iter().map(|g| raw_edge_features(model, g)).collect::<Result<_>>()?;
    let mut params = ParamStore::new();
    fit_normalizer(&mut params, &raw, width)?;
    mlp_init(&mut params, "mlp", &[width, config.hidden_dim, 1], &mut rng)?;
    // Start close to the full graph, where the frozen model's gradients are
    // informative; the constraint then prunes.
    let start = if delete { 1.0 - INITIAL_KEEP } else { INITIAL_KEEP };
    let bias = LOGIT_BOUND * ((start / (1.0 - start)).ln() / LOGIT_BOUND).atanh();
    params.insert("mlp.b1", Tensor::vector(vec![bias])?);
    let feats: Vec<Tensor> = raw
        .into_iter()
        .zip(graphs)
        .map(|(r, g)| normalize(&params, r, g.num_edges()))
        .collect::<Result<_>>()?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tau = config.tau_at(epoch);
        order.shuffle(&mut rng);
        let (mut attr_sum, mut info_sum, mut total_sum, mut steps) = (0.0, 0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch_graphs: Vec<&Graph> = chunk.iter().map(|&i| graphs[i]).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let rows: Vec<f64> = chunk.iter().flat_map(|&i| feats[i].data().iter().copied()).collect();
            let batch = GraphBatch::new(&batch_graphs)?;
            let x = Tensor::new(vec![batch.num_edges, width], rows)?;
            let mut tape = Tape::new();
            let p = bind_store(&mut tape, &params, true);
            let probs = edge_probs_on_tape(&mut tape, &p, x)?;
            let noise = uniform_noise(batch.num_edges, &mut rng);
            let mask = gumbel_sample_tape(&mut tape, probs, tau, &noise)?;
            let weights = if delete {
                let neg = tape.neg(mask)?;
                tape.add_scalar(neg, 1.0)?
            } else {
                mask
            };
            let terms = objective_terms(&mut tape, model, &batch, weights, probs, mask, &y, config)?;
            let grads = tape.backward(terms.total)?;
            let named = p
                .iter()
                .filter(|(n, _)| n.starts_with("mlp."))
                .map(|(n, &v)| (n.clone(), grads.wrt(v)))
                .collect();
            adam.step(&mut params, &named)?;
            attr_sum += tape.value(terms.attr).item()?;
            info_sum += terms.info.map_or(Ok(0.0), |v| tape.value(v).item())?;
            total_sum += tape.value(terms.total).item()?;
            steps += 1;
        }
        let n = steps as f64;
        history.push(LossRecord {
            epoch,
            attr: attr_sum / n,
            info: info_sum / n,
            total: total_sum / n,
            mean_return: None,
        });
    }
    Ok(TrainedExplainer {
        config: config.clone(),
        params,
        history,
    })
}

pub(crate) struct Terms {
    pub attr: Var,
    pub info: Option<Var>,
    pub total: Var,
}

/// Cross-entropy of the frozen model under `weights` plus the constraint,
/// averaged per graph.
#[allow(clippy::too_many_arguments)]
pub(crate) fn objective_terms(
    tape: &mut Tape,
    model: &GnnModel,
    batch: &GraphBatch,
    weights: Var,
    probs: Var,
    mask: Var,
    targets: &[usize],
    config: &ExplainerConfig,
) -> Result<Terms> {
    let frozen = model.bind(tape, false);
    let out = model.forward(tape, &frozen, batch, Some(weights))?;
    let attr = tape.cross_entropy(out.logits, targets)?;
    let mut info: Option<Var> = None;
    for g in 0..batch.num_graphs {
        let range: Vec<usize> = batch.edge_range(g).collect();
        if range.is_empty() {
            continue;
        }
        let pg = tape.gather(probs, &range)?;
        let mg = tape.gather(mask, &range)?;
        if let Some(term) = config.constraint.penalty(tape, pg, mg)? {
            info = Some(match info {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }
    let info = match info {
        Some(v) => Some(tape.mul_scalar(v, 1.0 / batch.num_graphs as f64)?),
        None => None,
    };
    let total = match info {
        Some(i) => tape.add(attr, i)?,
        None => attr,
    };
    Ok(Terms { attr, info, total })
}

/// Edge logits are squashed into `±LOGIT_BOUND`: keeps every probability off
/// the clamping range, so gradients never vanish and rankings stay strict.
const LOGIT_BOUND: f64 = 8.0;

fn edge_probs_on_tape(tape: &mut Tape, p: &Bound, x: Tensor) -> Result<Var> {
    let rows = x.shape()[0];
    let x = tape.constant(x);
    let logits = mlp_forward(tape, p, "mlp", x)?;
    let logits = tape.reshape(logits, vec![rows])?;
    let logits = tape.mul_scalar(logits, 1.0 / LOGIT_BOUND)?;
    let logits = tape.tanh(logits)?;
    let logits = tape.mul_scalar(logits, LOGIT_BOUND)?;
    Ok(tape.sigmoid(logits)?)
}

/// Deterministic per-edge probabilities, or a Gumbel sample when the
/// explainer is configured to sample at inference.
pub(crate) fn edge_probs(te: &TrainedExplainer, model: &GnnModel, graph: &Graph) -> Result<Vec<f64>> {
    if graph.num_edges() == 0 {
        return Ok(Vec::new());
    }
    let x = edge_features(model, &te.params, graph)?;
    let mut tape = Tape::new();
    let p = bind_store(&mut tape, &te.params, false);
    let probs = edge_probs_on_tape(&mut tape, &p, x)?;
    let mut out = tape.value(probs).data().to_vec();
    if te.config.sample_at_inference {
        let mut rng = rng_from_seed(derive_seed(te.config.seed, graph_stream(graph)));
        let noise = uniform_noise(out.len(), &mut rng);
        for (v, e) in out.iter_mut().zip(noise) {
            *v = gumbel_sample(*v, te.config.tau_end, e);
        }
    }
    Ok(out)
}

pub(crate) fn explain(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
    let target = model.predict(graph, None)?.label;
    Ok(ExplanationMask::with_budget(edge_probs(te, model, graph)?, k, target))
}
