use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GnnConfig, GnnModel, GraphBatch};
use crate::graphdata::{Dataset, Graph, Split};
use crate::tensor::{Adam, AdamConfig, Tape};
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: GnnModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

fn labels_of(graphs: &[&Graph]) -> Result<Vec<usize>> {
    graphs
        .iter()
        .map(|g| g.label.ok_or_else(|| Error::domain("training graph without a label")))
        .collect()
}

/// Mean cross-entropy and accuracy of `model` over `graphs`.
fn evaluate(model: &GnnModel, graphs: &[&Graph], batch_size: usize) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in graphs.chunks(batch_size) {
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, false);
        let batch = GraphBatch::new(chunk)?;
        let out = model.forward(&mut tape, &p, &batch, None)?;
        let y = labels_of(chunk)?;
        let ce = tape.cross_entropy(out.logits, &y)?;
        loss += tape.value(ce).item()? * chunk.len() as f64;
        let c = model.config.num_classes;
        for (row, &t) in tape.value(out.logits).data().chunks(c).zip(&y) {
            if super::prediction_from_logits(row).label == t {
                correct += 1;
            }
        }
    }
    let n = graphs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Cross-entropy training with Adam on mini-batches, early stopping on
/// validation loss.
pub fn train_base(dataset: &Dataset, config: &GnnConfig, seed: u64) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.num_classes < 2 {
        return Err(Error::domain("training needs at least two classes"));
    }
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::domain("dataset needs non-empty train and val splits"));
    }
    let mut config = config.clone();
    config.num_classes = dataset.num_classes;
    config.node_dim = dataset.graphs[0].node_dim();
    config.edge_dim = dataset.graphs.iter().find(|g| g.num_edges() > 0).map_or(0, Graph::edge_dim);
    let mut model = GnnModel::init(config.clone(), seed)?;
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let val: Vec<&Graph> = val_idx.iter().map(|&i| &dataset.graphs[i]).collect();
    let mut order = train_idx.clone();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0, model.params.clone());
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
            let y = labels_of(&graphs)?;
            let mut tape = Tape::new();
            let p = model.bind(&mut tape, true);
            let batch = GraphBatch::new(&graphs)?;
            let out = model.forward(&mut tape, &p, &batch, None)?;
            let loss = tape.cross_entropy(out.logits, &y)?;
            total += tape.value(loss).item()? * graphs.len() as f64;
            let grads = tape.backward(loss)?;
            let named: BTreeMap<String, _> = p.vars().map(|(n, &v)| (n.clone(), grads.wrt(v))).collect();
            adam.step(&mut model.params, &named)?;
            model.update_running_stats(&p)?;
        }
        let (val_loss, val_acc) = evaluate(&model, &val, config.batch_size)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / order.len() as f64,
            val_loss,
            val_acc,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    model.params = best.2;
    Ok(TrainedModel {
        model,
        history,
        best_epoch: best.1,
    })
}

/// Fraction of graphs in `split` whose predicted class equals the label.
pub fn accuracy(model: &GnnModel, dataset: &Dataset, split: Split) -> Result<f64> {
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(Error::domain(format!("split {} is empty", split.as_str())));
    }
    let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs[i]).collect();
    let mut correct = 0;
    for chunk in graphs.chunks(256) {
        for (g, p) in chunk.iter().zip(model.predict_many(chunk, None)?) {
            if Some(p.label) == g.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / graphs.len() as f64)
}
