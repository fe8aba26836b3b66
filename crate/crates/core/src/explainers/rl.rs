use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::common::{argsort_desc, bind_store, edge_features, fit_normalizer, mlp_forward, mlp_init, raw_edge_features, trajectory_weights, Bound};
use super::{train_graphs, ExplainerConfig, ExplanationMask, LossRecord, TrainedExplainer};
use crate::gnn::GnnModel;
use crate::graphdata::{Dataset, Graph};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::{rng_from_seed, Result, Rng};

/// Edges touching `nodes` that are not yet chosen, ascending.
pub(crate) fn frontier(graph: &Graph, adj: &[Vec<(usize, usize)>], nodes: &BTreeSet<usize>, chosen: &[usize]) -> Vec<usize> {
    let mut out: BTreeSet<usize> = BTreeSet::new();
    for &n in nodes {
        for &(_, e) in &adj[n] {
            if !chosen.contains(&e) {
                out.insert(e);
            }
        }
    }
    debug_assert!(out.iter().all(|&e| e < graph.num_edges()));
    out.into_iter().collect()
}

fn scores_on_tape(tape: &mut Tape, p: &Bound, x: Tensor) -> Result<Var> {
    let rows = x.shape()[0];
    let x = tape.constant(x);
    let s = mlp_forward(tape, p, "policy", x)?;
    Ok(tape.reshape(s, vec![rows])?)
}

struct Episode {
    /// Chosen edge per step.
    actions: Vec<usize>,
    /// Log-probability of each chosen action (on the tape).
    log_probs: Vec<Var>,
}

/// Samples one episode from a random endpoint of a random edge.
fn rollout(tape: &mut Tape, scores: Var, graph: &Graph, adj: &[Vec<(usize, usize)>], steps: usize, rng: &mut Rng) -> Result<Episode> {
    let e0 = rng.random_range(0..graph.num_edges());
    let (u, v) = graph.edges[e0];
    let start = if rng.random::<bool>() { u } else { v };
    let mut nodes = BTreeSet::from([start]);
    let mut actions = Vec::with_capacity(steps);
    let mut log_probs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let options = frontier(graph, adj, &nodes, &actions);
        if options.is_empty() {
            break;
        }
        let picked = tape.gather(scores, &options)?;
        let row = tape.reshape(picked, vec![1, options.len()])?;
        let logp = tape.log_softmax(row)?;
        let probs: Vec<f64> = tape.value(logp).data().iter().map(|l| l.exp()).collect();
        let mut r = rng.random::<f64>();
        let mut choice = options.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            if r < *p {
                choice = i;
                break;
            }
            r -= p;
        }
        let flat = tape.reshape(logp, vec![options.len()])?;
        log_probs.push(tape.gather(flat, &[choice])?);
        let e = options[choice];
        actions.push(e);
        nodes.insert(graph.edges[e].0);
        nodes.insert(graph.edges[e].1);
    }
    Ok(Episode { actions, log_probs })
}

/// `P_f(G_k)[target]` for the empty start and every prefix of `actions`.
fn prefix_probs(model: &GnnModel, graph: &Graph, actions: &[usize], target: usize) -> Result<Vec<f64>> {
    let mut masks = Vec::with_capacity(actions.len() + 1);
    let mut w = vec![0.0; graph.num_edges()];
    masks.push(w.clone());
    for &a in actions {
        w[a] = 1.0;
        masks.push(w.clone());
    }
    let graphs = vec![graph; masks.len()];
    Ok(model.predict_many(&graphs, Some(&masks))?.iter().map(|p| p.probs[target]).collect())
}

struct Prepared<'a> {
    graph: &'a Graph,
    adj: Vec<Vec<(usize, usize)>>,
    feats: Tensor,
    target: usize,
}

fn prepare<'a>(model: &GnnModel, params: &ParamStore, graphs: &[&'a Graph]) -> Result<Vec<Prepared<'a>>> {
    let targets = model.predict_many(graphs, None)?;
    graphs
        .iter()
        .zip(targets)
        .map(|(g, t)| {
            Ok(Prepared {
                graph: g,
                adj: g.adjacency(),
                feats: edge_features(model, params, g)?,
                target: t.label,
            })
        })
        .collect()
}

/// REINFORCE on the probability gain of each added edge.
pub(crate) fn train(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<TrainedExplainer> {
    let idx = train_graphs(dataset)?;
    let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs[i]).filter(|g| g.num_edges() > 0).collect();
    train_on(model, &graphs, config)
}

pub(crate) fn train_on(model: &GnnModel, graphs: &[&Graph], config: &ExplainerConfig) -> Result<TrainedExplainer> {
    let mut rng = rng_from_seed(config.seed);
    let width = 2 * model.config.hidden_dim;
    let raw: Vec<Vec<f64>> = graphs.iter().map(|g| raw_edge_features(model, g)).collect::<Result<_>>()?;
    let mut params = ParamStore::new();
    fit_normalizer(&mut params, &raw, width)?;
    mlp_init(&mut params, "policy", &[width, config.hidden_dim, 1], &mut rng)?;
    let prepared = prepare(model, &params, graphs)?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut ret_sum, mut steps) = (0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let p = bind_store(&mut tape, &params, true);
            let mut loss: Option<Var> = None;
            for &i in chunk {
                let pr = &prepared[i];
                let scores = scores_on_tape(&mut tape, &p, pr.feats.clone())?;
                let ep = rollout(&mut tape, scores, pr.graph, &pr.adj, config.k_rl, &mut rng)?;
                let probs = prefix_probs(model, pr.graph, &ep.actions, pr.target)?;
                ret_sum += probs[probs.len() - 1] - probs[0];
                for (k, &lp) in ep.log_probs.iter().enumerate() {
                    let reward = probs[k + 1] - probs[k];
                    let term = tape.mul_scalar(lp, -reward / chunk.len() as f64)?;
                    loss = Some(match loss {
                        Some(acc) => tape.add(acc, term)?,
                        None => term,
                    });
                }
            }
            let Some(loss) = loss else { continue };
            let grads = tape.backward(loss)?;
            let named = p
                .iter()
                .filter(|(n, _)| n.starts_with("policy."))
                .map(|(n, &v)| (n.clone(), grads.wrt(v)))
                .collect();
            adam.step(&mut params, &named)?;
            loss_sum += tape.value(loss).item()?;
            steps += 1;
        }
        let n = steps.max(1) as f64;
        history.push(LossRecord {
            epoch,
            attr: loss_sum / n,
            info: 0.0,
            total: loss_sum / n,
            mean_return: Some(ret_sum / prepared.len() as f64),
        });
    }
    Ok(TrainedExplainer {
        config: config.clone(),
        params,
        history,
    })
}

/// Mean return of sampled episodes (final minus initial target probability)
/// over `graphs`, with a fixed sampling seed.
pub fn average_return(te: &TrainedExplainer, model: &GnnModel, graphs: &[&Graph], seed: u64) -> Result<f64> {
    let graphs: Vec<&Graph> = graphs.iter().copied().filter(|g| g.num_edges() > 0).collect();
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let prepared = prepare(model, &te.params, &graphs)?;
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for pr in &prepared {
        let mut tape = Tape::new();
        let p = bind_store(&mut tape, &te.params, false);
        let scores = scores_on_tape(&mut tape, &p, pr.feats.clone())?;
        let ep = rollout(&mut tape, scores, pr.graph, &pr.adj, te.config.k_rl, &mut rng)?;
        let probs = prefix_probs(model, pr.graph, &ep.actions, pr.target)?;
        total += probs[probs.len() - 1] - probs[0];
    }
    Ok(total / prepared.len() as f64)
}

/// Policy probabilities over the frontier after choosing `chosen` from
/// `start`; used to inspect the learned policy.
pub fn policy_distribution(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, start: usize, chosen: &[usize]) -> Result<Vec<(usize, f64)>> {
    let feats = edge_features(model, &te.params, graph)?;
    let mut tape = Tape::new();
    let p = bind_store(&mut tape, &te.params, false);
    let scores = scores_on_tape(&mut tape, &p, feats)?;
    let mut nodes = BTreeSet::from([start]);
    for &e in chosen {
        nodes.insert(graph.edges[e].0);
        nodes.insert(graph.edges[e].1);
    }
    let options = frontier(graph, &graph.adjacency(), &nodes, chosen);
    let s = tape.value(scores).data();
    let m = options.iter().map(|&e| s[e]).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = options.iter().map(|&e| (s[e] - m).exp()).sum();
    Ok(options.iter().map(|&e| (e, (s[e] - m).exp() / z)).collect())
}

/// Greedy construction: start from the best-scoring edge and keep adding
/// the best-scoring frontier edge until `k` edges are chosen.
pub(crate) fn explain(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
    let target = model.predict(graph, None)?.label;
    if graph.num_edges() == 0 {
        return Ok(ExplanationMask::with_budget(Vec::new(), k, target));
    }
    let feats = edge_features(model, &te.params, graph)?;
    let mut tape = Tape::new();
    let p = bind_store(&mut tape, &te.params, false);
    let scores = scores_on_tape(&mut tape, &p, feats)?;
    let s = tape.value(scores).data().to_vec();
    let adj = graph.adjacency();
    let first = argsort_desc(&s)[0];
    let mut chosen = vec![first];
    let mut nodes = BTreeSet::from([graph.edges[first].0, graph.edges[first].1]);
    while chosen.len() < k {
        let options = frontier(graph, &adj, &nodes, &chosen);
        let Some(&best) = options.iter().max_by(|&&a, &&b| s[a].total_cmp(&s[b]).then(b.cmp(&a))) else {
            break;
        };
        chosen.push(best);
        nodes.insert(graph.edges[best].0);
        nodes.insert(graph.edges[best].1);
    }
    let importance: Vec<f64> = s.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
    let weights = trajectory_weights(graph.num_edges(), &chosen, &importance);
    Ok(ExplanationMask::with_budget(weights, k, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnConfig;

    fn cycle(n: usize) -> Graph {
        let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::with_constant_features(n, edges, 1, 1, Some(0)).unwrap()
    }

    fn tiny_model() -> GnnModel {
        GnnModel::init(
            GnnConfig {
                hidden_dim: 8,
                ..GnnConfig::default()
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_graph_keeps_uniform_policy() {
        let g = cycle(8);
        let model = tiny_model();
        let cfg = ExplainerConfig {
            family: super::super::Family::RlMdp,
            epochs: 5,
            k_rl: 3,
            ..ExplainerConfig::default()
        };
        let te = train_on(&model, &[&g; 4], &cfg).unwrap();
        let dist = policy_distribution(&te, &model, &g, 0, &[]).unwrap();
        let u = 1.0 / dist.len() as f64;
        let kl: f64 = dist.iter().map(|(_, p)| p * (p / u).ln()).sum();
        assert!(kl <= 0.05, "{kl}");
    }

    #[test]
    fn single_edge_trajectory() {
        let g = Graph::with_constant_features(2, vec![(0, 1)], 1, 1, Some(0)).unwrap();
        let model = tiny_model();
        let cfg = ExplainerConfig {
            family: super::super::Family::RlMdp,
            epochs: 2,
            ..ExplainerConfig::default()
        };
        let te = train_on(&model, &[&g], &cfg).unwrap();
        let m = explain(&te, &model, &g, 6).unwrap();
        assert_eq!(m.hard_edge_ids(), vec![0]);
        let mut tape = Tape::new();
        let p = bind_store(&mut tape, &te.params, false);
        let feats = edge_features(&model, &te.params, &g).unwrap();
        let scores = scores_on_tape(&mut tape, &p, feats).unwrap();
        let ep = rollout(&mut tape, scores, &g, &g.adjacency(), 6, &mut rng_from_seed(0)).unwrap();
        assert_eq!(ep.actions, vec![0]);
    }
}
