use rand::seq::SliceRandom;
use rand_distr::StandardNormal;

use super::common::{bind_store, fit_normalizer, graph_stream, mlp_forward, mlp_init, normalize, Bound};
use super::maskgen::objective_terms;
use super::{train_graphs, ExplainerConfig, ExplanationMask, LossRecord, TrainedExplainer};
use crate::gnn::{GnnModel, GraphBatch};
use crate::graphdata::{Dataset, Graph};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::{derive_seed, rng_from_seed, Result};

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − ln σ²)`.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}

pub fn gaussian_kl_tape(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let m2 = tape.mul(mu, mu)?;
    let ev = tape.exp(logvar)?;
    let a = tape.add(m2, ev)?;
    let a = tape.sub(a, logvar)?;
    let a = tape.add_scalar(a, -1.0)?;
    let s = tape.sum(a, None)?;
    Ok(tape.mul_scalar(s, 0.5)?)
}

fn standard_normal(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

struct Encoded {
    mu: Var,
    logvar: Var,
}

fn encode(tape: &mut Tape, p: &Bound, x: Tensor) -> Result<Encoded> {
    let x = tape.constant(x);
    let h = mlp_forward(tape, p, "enc", x)?;
    let h = tape.relu(h)?;
    let mu = mlp_forward(tape, p, "mu", h)?;
    let logvar = mlp_forward(tape, p, "logvar", h)?;
    // Bounded log-variance keeps exp finite early in training.
    let logvar = tape.clamp(logvar, -10.0, 10.0)?;
    Ok(Encoded { mu, logvar })
}

/// `σ(z_u · z_v)` for every listed edge.
fn decode(tape: &mut Tape, z: Var, src: &[usize], dst: &[usize]) -> Result<Var> {
    let zu = tape.gather(z, src)?;
    let zv = tape.gather(z, dst)?;
    let prod = tape.mul(zu, zv)?;
    let dot = tape.sum(prod, Some(1))?;
    Ok(tape.sigmoid(dot)?)
}

fn endpoints(graphs: &[&Graph]) -> (Vec<usize>, Vec<usize>) {
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let mut off = 0;
    for g in graphs {
        for &(u, v) in &g.edges {
            src.push(off + u);
            dst.push(off + v);
        }
        off += g.num_nodes;
    }
    (src, dst)
}

pub(crate) fn train(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<TrainedExplainer> {
    let idx = train_graphs(dataset)?;
    let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs[i]).filter(|g| g.num_edges() > 0).collect();
    let targets: Vec<usize> = model.predict_many(&graphs, None)?.iter().map(|p| p.label).collect();
    let mut rng = rng_from_seed(config.seed);
    let width = model.config.hidden_dim;
    let raw: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| model.node_embeddings(g).map(Tensor::into_data))
        .collect::<Result<_>>()?;
    let mut params = ParamStore::new();
    fit_normalizer(&mut params, &raw, width)?;
    mlp_init(&mut params, "enc", &[width, config.hidden_dim], &mut rng)?;
    mlp_init(&mut params, "mu", &[config.hidden_dim, config.latent_dim], &mut rng)?;
    mlp_init(&mut params, "logvar", &[config.hidden_dim, config.latent_dim], &mut rng)?;
    let feats: Vec<Tensor> = raw
        .into_iter()
        .zip(&graphs)
        .map(|(r, g)| normalize(&params, r, g.num_nodes))
        .collect::<Result<_>>()?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut attr_sum, mut info_sum, mut total_sum, mut steps) = (0.0, 0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let bg: Vec<&Graph> = chunk.iter().map(|&i| graphs[i]).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            let batch = GraphBatch::new(&bg)?;
            let rows: Vec<f64> = chunk.iter().flat_map(|&i| feats[i].data().iter().copied()).collect();
            let x = Tensor::new(vec![batch.num_nodes, width], rows)?;
            let mut tape = Tape::new();
            let p = bind_store(&mut tape, &params, true);
            let enc = encode(&mut tape, &p, x)?;
            let noise = tape.constant(Tensor::new(
                vec![batch.num_nodes, config.latent_dim],
                standard_normal(batch.num_nodes * config.latent_dim, &mut rng),
            )?);
            let half = tape.mul_scalar(enc.logvar, 0.5)?;
            let sigma = tape.exp(half)?;
            let jitter = tape.mul(sigma, noise)?;
            let z = tape.add(enc.mu, jitter)?;
            let (src, dst) = endpoints(&bg);
            let scores = decode(&mut tape, z, &src, &dst)?;
            let terms = objective_terms(&mut tape, model, &batch, scores, scores, scores, &y, config)?;
            let kl = gaussian_kl_tape(&mut tape, enc.mu, enc.logvar)?;
            let kl = tape.mul_scalar(kl, config.latent_kl_weight / bg.len() as f64)?;
            let attr = tape.add(terms.attr, kl)?;
            let total = tape.add(terms.total, kl)?;
            let grads = tape.backward(total)?;
            let named = p
                .iter()
                .filter(|(n, _)| !n.starts_with("norm."))
                .map(|(n, &v)| (n.clone(), grads.wrt(v)))
                .collect();
            adam.step(&mut params, &named)?;
            attr_sum += tape.value(attr).item()?;
            info_sum += terms.info.map_or(Ok(0.0), |v| tape.value(v).item())?;
            total_sum += tape.value(total).item()?;
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

/// Decoder scores from the posterior mean (or a posterior sample when
/// sampling at inference is enabled).
pub(crate) fn explain(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
    let target = model.predict(graph, None)?.label;
    if graph.num_edges() == 0 {
        return Ok(ExplanationMask::with_budget(Vec::new(), k, target));
    }
    let raw = model.node_embeddings(graph)?.into_data();
    let x = normalize(&te.params, raw, graph.num_nodes)?;
    let mut tape = Tape::new();
    let p = bind_store(&mut tape, &te.params, false);
    let enc = encode(&mut tape, &p, x)?;
    let z = if te.config.sample_at_inference {
        let mut rng = rng_from_seed(derive_seed(te.config.seed, graph_stream(graph)));
        let shape = tape.value(enc.mu).shape().to_vec();
        let noise = tape.constant(Tensor::new(shape, standard_normal(graph.num_nodes * te.config.latent_dim, &mut rng))?);
        let half = tape.mul_scalar(enc.logvar, 0.5)?;
        let sigma = tape.exp(half)?;
        let jitter = tape.mul(sigma, noise)?;
        tape.add(enc.mu, jitter)?
    } else {
        enc.mu
    };
    let (src, dst) = endpoints(&[graph]);
    let scores = decode(&mut tape, z, &src, &dst)?;
    Ok(ExplanationMask::with_budget(tape.value(scores).data().to_vec(), k, target))
}
