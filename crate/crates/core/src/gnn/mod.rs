//! The base classifier being explained.
//!
//! Graphs are batched as a disjoint union. Each undirected edge carries one
//! weight in `[0, 1]` that scales its messages in both directions, so a
//! soft edge mask enters the model as differentiable input.

mod batch;
mod train;

pub use batch::GraphBatch;
pub use train::{accuracy, train_base, EpochRecord, TrainedModel};

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graphdata::Graph;
use crate::tensor::{glorot_uniform, ParamStore, Tape, Tensor, Var};
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Gin,
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerKind::Gcn),
            "gin" => Ok(LayerKind::Gin),
            other => Err(format!("unknown layer kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub layer_kind: LayerKind,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub readout: Readout,
    pub num_classes: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            layer_kind: LayerKind::Gin,
            hidden_dim: 32,
            num_layers: 3,
            readout: Readout::Max,
            num_classes: 2,
            node_dim: 1,
            edge_dim: 1,
            lr: 0.001,
            max_epochs: 200,
            patience: 20,
            batch_size: 64,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 || self.hidden_dim < 1 {
            return Err(Error::domain("num_layers and hidden_dim must be >= 1"));
        }
        if self.num_classes < 1 || self.node_dim < 1 || self.batch_size < 1 {
            return Err(Error::domain("num_classes, node_dim and batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Class prediction with its probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

/// Softmax over `logits` and argmax with lowest-index tie-break.
pub fn prediction_from_logits(logits: &[f64]) -> Prediction {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut label = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[label] {
            label = i;
        }
    }
    Prediction { label, probs }
}

/// Parameters bound onto a tape for one forward pass.
///
/// Trainable bindings normalize with batch statistics and record them for
/// the running averages; constant bindings use the stored running averages.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
    training: bool,
    batch_stats: RefCell<BTreeMap<usize, (Vec<f64>, Vec<f64>)>>,
}

impl BoundParams {
    fn get(&self, name: &str) -> Var {
        self.vars[name]
    }

    /// Trainable variables (running statistics excluded).
    pub fn vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter().filter(|(n, _)| !is_running_stat(n))
    }
}

fn is_running_stat(name: &str) -> bool {
    name.ends_with(".bn_mean") || name.ends_with(".bn_var")
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Output of a batched forward pass.
pub struct Forward {
    /// `num_graphs × num_classes`
    pub logits: Var,
    /// `num_nodes × hidden_dim`, output of the last message-passing layer.
    pub node_embeddings: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub params: ParamStore,
}

impl GnnModel {
    /// Fresh model with fan-based uniform weights, zero biases and zero GIN epsilons.
    pub fn init(config: GnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let mut d_in = config.node_dim;
        for l in 0..config.num_layers {
            match config.layer_kind {
                LayerKind::Gin => {
                    params.insert(format!("layer{l}.w1"), glorot_uniform(d_in, h, &mut rng)?);
                    params.insert(format!("layer{l}.b1"), Tensor::zeros(&[h])?);
                    params.insert(format!("layer{l}.bn_g"), Tensor::ones(&[h])?);
                    params.insert(format!("layer{l}.bn_b"), Tensor::zeros(&[h])?);
                    params.insert(format!("layer{l}.bn_mean"), Tensor::zeros(&[h])?);
                    params.insert(format!("layer{l}.bn_var"), Tensor::ones(&[h])?);
                    params.insert(format!("layer{l}.w2"), glorot_uniform(h, h, &mut rng)?);
                    params.insert(format!("layer{l}.b2"), Tensor::zeros(&[h])?);
                    params.insert(format!("layer{l}.eps"), Tensor::zeros(&[1])?);
                    if config.edge_dim > 0 {
                        params.insert(format!("layer{l}.edge_w"), glorot_uniform(config.edge_dim, d_in, &mut rng)?);
                        params.insert(format!("layer{l}.edge_b"), Tensor::zeros(&[d_in])?);
                    }
                }
                LayerKind::Gcn => {
                    params.insert(format!("layer{l}.w"), glorot_uniform(d_in, h, &mut rng)?);
                    params.insert(format!("layer{l}.b"), Tensor::zeros(&[h])?);
                }
            }
            d_in = h;
        }
        params.insert("head.w", glorot_uniform(h, config.num_classes, &mut rng)?);
        params.insert("head.b", Tensor::zeros(&[config.num_classes])?);
        Ok(Self { config, params })
    }

    /// Rebuilds a model from stored parameters, checking their shapes.
    pub fn from_params(config: GnnConfig, params: ParamStore) -> Result<Self> {
        let reference = GnnModel::init(config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::domain(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::domain(format!("missing parameter {name}"))),
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::domain("checkpoint has unexpected extra parameters"));
        }
        Ok(Self { config, params })
    }

    /// Places the parameters on `tape`, trainable or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(n, t)| {
                let v = if trainable && !is_running_stat(n) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (n.clone(), v)
            })
            .collect();
        BoundParams {
            vars,
            training: trainable,
            batch_stats: RefCell::new(BTreeMap::new()),
        }
    }

    /// Folds the batch statistics seen by a trainable forward pass into the
    /// running averages.
    pub fn update_running_stats(&mut self, p: &BoundParams) -> Result<()> {
        for (l, (mean, var)) in p.batch_stats.borrow().iter() {
            for (name, fresh) in [(format!("layer{l}.bn_mean"), mean), (format!("layer{l}.bn_var"), var)] {
                let t = self
                    .params
                    .get_mut(&name)
                    .ok_or_else(|| Error::domain(format!("missing parameter {name}")))?;
                for (r, f) in t.data_mut().iter_mut().zip(fresh) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * f;
                }
            }
        }
        Ok(())
    }

    /// Batch normalization over nodes, followed by the learned affine map.
    fn batch_norm(&self, tape: &mut Tape, p: &BoundParams, l: usize, z: Var) -> Result<Var> {
        let normed = if p.training {
            let mean = tape.mean(z, Some(0))?;
            let neg = tape.neg(mean)?;
            let centered = tape.add_row(z, neg)?;
            let sq = tape.mul(centered, centered)?;
            let var = tape.mean(sq, Some(0))?;
            p.batch_stats
                .borrow_mut()
                .insert(l, (tape.value(mean).data().to_vec(), tape.value(var).data().to_vec()));
            let var = tape.add_scalar(var, BN_EPS)?;
            let inv = tape.powf(var, -0.5)?;
            tape.mul_row(centered, inv)?
        } else {
            let mean = self.params.get(&format!("layer{l}.bn_mean")).expect("bn stats").map(|m| -m);
            let inv = self
                .params
                .get(&format!("layer{l}.bn_var"))
                .expect("bn stats")
                .map(|v| 1.0 / (v + BN_EPS).sqrt());
            let shift = tape.constant(mean);
            let scale = tape.constant(inv);
            let centered = tape.add_row(z, shift)?;
            tape.mul_row(centered, scale)?
        };
        let scaled = tape.mul_row(normed, p.get(&format!("layer{l}.bn_g")))?;
        Ok(tape.add_row(scaled, p.get(&format!("layer{l}.bn_b")))?)
    }

    /// Batched forward pass. `edge_weights`, when given, holds one value in
    /// `[0, 1]` per undirected edge of the batch in batch edge order.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, batch: &GraphBatch, edge_weights: Option<Var>) -> Result<Forward> {
        if let Some(w) = edge_weights {
            let t = tape.value(w);
            if t.numel() != batch.num_edges {
                return Err(Error::domain(format!(
                    "{} edge weights for {} edges",
                    t.numel(),
                    batch.num_edges
                )));
            }
            if let Some(bad) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::domain(format!("edge weight {bad} outside [0, 1]")));
            }
        }
        let has_edges = !batch.src.is_empty();
        let w_dir = match (edge_weights, has_edges) {
            (Some(w), true) => Some(tape.gather(w, &batch.dir_to_edge)?),
            _ => None,
        };
        let mut h = tape.constant(batch.x.clone());
        let edge_attr = match (&batch.edge_attr, has_edges) {
            (Some(a), true) => Some(tape.constant(a.clone())),
            _ => None,
        };
        for l in 0..self.config.num_layers {
            h = match self.config.layer_kind {
                LayerKind::Gin => self.gin_layer(tape, p, l, h, batch, w_dir, edge_attr)?,
                LayerKind::Gcn => self.gcn_layer(tape, p, l, h, batch, w_dir)?,
            };
            // The last layer stays linear so its units cannot all die.
            if l + 1 < self.config.num_layers {
                h = tape.relu(h)?;
            }
        }
        let pooled = tape.segment_max(h, &batch.node_graph, batch.num_graphs)?;
        let z = tape.matmul(pooled, p.get("head.w"))?;
        let logits = tape.add_row(z, p.get("head.b"))?;
        Ok(Forward {
            logits,
            node_embeddings: h,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn gin_layer(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        l: usize,
        h: Var,
        batch: &GraphBatch,
        w_dir: Option<Var>,
        edge_attr: Option<Var>,
    ) -> Result<Var> {
        let eps = tape.add_scalar(p.get(&format!("layer{l}.eps")), 1.0)?;
        let mut z = tape.mul(eps, h)?;
        if !batch.src.is_empty() {
            let mut msg = tape.gather(h, &batch.src)?;
            if let (Some(attr), Some(_)) = (edge_attr, self.params.get(&format!("layer{l}.edge_w"))) {
                let proj = tape.matmul(attr, p.get(&format!("layer{l}.edge_w")))?;
                let proj = tape.add_row(proj, p.get(&format!("layer{l}.edge_b")))?;
                msg = tape.add(msg, proj)?;
            }
            if let Some(w) = w_dir {
                msg = tape.scale_rows(msg, w)?;
            }
            let agg = tape.scatter_add(msg, &batch.dst, batch.num_nodes)?;
            z = tape.add(z, agg)?;
        }
        let z = tape.matmul(z, p.get(&format!("layer{l}.w1")))?;
        let z = tape.add_row(z, p.get(&format!("layer{l}.b1")))?;
        let z = self.batch_norm(tape, p, l, z)?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, p.get(&format!("layer{l}.w2")))?;
        Ok(tape.add_row(z, p.get(&format!("layer{l}.b2")))?)
    }

    /// `D^-1/2 (A_w + I) D^-1/2 H W + b` with `D` the row sums of `A_w + I`.
    fn gcn_layer(&self, tape: &mut Tape, p: &BoundParams, l: usize, h: Var, batch: &GraphBatch, w_dir: Option<Var>) -> Result<Var> {
        let hw = tape.matmul(h, p.get(&format!("layer{l}.w")))?;
        let n = batch.num_nodes;
        let ones_dir = || Tensor::ones(&[batch.src.len()]);
        let out = if batch.src.is_empty() {
            hw
        } else {
            let w = match w_dir {
                Some(w) => w,
                None => tape.constant(ones_dir()?),
            };
            let deg = tape.scatter_add(w, &batch.dst, n)?;
            let deg = tape.add_scalar(deg, 1.0)?;
            let dinv_sqrt = tape.powf(deg, -0.5)?;
            let self_coef = tape.powf(deg, -1.0)?;
            let ds = tape.gather(dinv_sqrt, &batch.src)?;
            let dd = tape.gather(dinv_sqrt, &batch.dst)?;
            let coef = tape.mul(w, ds)?;
            let coef = tape.mul(coef, dd)?;
            let msg = tape.gather(hw, &batch.src)?;
            let msg = tape.scale_rows(msg, coef)?;
            let agg = tape.scatter_add(msg, &batch.dst, n)?;
            let selfm = tape.scale_rows(hw, self_coef)?;
            tape.add(agg, selfm)?
        };
        Ok(tape.add_row(out, p.get(&format!("layer{l}.b")))?)
    }

    /// Logits for one graph, optionally under per-edge weights.
    pub fn logits(&self, graph: &Graph, edge_weights: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let batch = GraphBatch::new(&[graph])?;
        let w = match edge_weights {
            Some(w) if w.len() != graph.num_edges() => {
                return Err(Error::domain(format!("{} edge weights for {} edges", w.len(), graph.num_edges())))
            }
            Some(w) if !w.is_empty() => Some(tape.constant(Tensor::vector(w.to_vec())?)),
            Some(_) | None => None,
        };
        if let Some(bad) = edge_weights.into_iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("edge weight {bad} outside [0, 1]")));
        }
        let out = self.forward(&mut tape, &p, &batch, w)?;
        Ok(tape.value(out.logits).data().to_vec())
    }

    pub fn predict(&self, graph: &Graph, edge_weights: Option<&[f64]>) -> Result<Prediction> {
        Ok(prediction_from_logits(&self.logits(graph, edge_weights)?))
    }

    /// Predictions for many (graph, weights) pairs in one batched pass.
    pub fn predict_many(&self, graphs: &[&Graph], edge_weights: Option<&[Vec<f64>]>) -> Result<Vec<Prediction>> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let batch = GraphBatch::new(graphs)?;
        let w = match edge_weights {
            Some(ws) => {
                if ws.len() != graphs.len() || ws.iter().zip(graphs).any(|(w, g)| w.len() != g.num_edges()) {
                    return Err(Error::domain("edge weights do not align with graphs"));
                }
                let flat: Vec<f64> = ws.iter().flatten().copied().collect();
                if flat.is_empty() {
                    None
                } else {
                    Some(tape.constant(Tensor::vector(flat)?))
                }
            }
            None => None,
        };
        let out = self.forward(&mut tape, &p, &batch, w)?;
        let c = self.config.num_classes;
        Ok(tape.value(out.logits).data().chunks(c).map(prediction_from_logits).collect())
    }

    /// Last-layer node embeddings of an unmasked graph (`num_nodes × hidden`).
    pub fn node_embeddings(&self, graph: &Graph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let batch = GraphBatch::new(&[graph])?;
        let out = self.forward(&mut tape, &p, &batch, None)?;
        Ok(tape.value(out.node_embeddings).clone())
    }
}
