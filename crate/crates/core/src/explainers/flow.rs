//! Flow matching over a DAG of states.
//!
//! A flow `F(s, s') > 0` on every transition is trained so that the flow
//! into each visited state equals the flow out of it, or its reward when
//! the state is terminal. Sampling transitions in proportion to the flow
//! then reaches terminal states in proportion to their rewards.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::common::{bind_store, edge_features, fit_normalizer, mlp_forward, mlp_init, raw_edge_features, trajectory_weights, Bound};
use super::{train_graphs, ExplainerConfig, ExplanationMask, LossRecord, TrainedExplainer};
use crate::gnn::GnnModel;
use crate::graphdata::{Dataset, Graph};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::{rng_from_seed, Error, Result, Rng};

pub trait FlowEnv {
    type State: Clone + Ord + Debug;

    fn initial(&self) -> Self::State;
    fn children(&self, s: &Self::State) -> Vec<Self::State>;
    fn parents(&self, s: &Self::State) -> Vec<Self::State>;
    fn is_terminal(&self, s: &Self::State) -> bool;
    /// Reward of a terminal state; must be positive.
    fn reward(&self, s: &Self::State) -> Result<f64>;
}

/// `Σ_τ Σ_{s ∈ τ, s ≠ s_0} (inflow(s) − [s terminal] R(s) − [s not terminal] outflow(s))²`.
///
/// `flows` maps a list of transitions to a vector of their flows on the
/// tape. It is called once with every transition the loss needs.
pub fn flow_matching_loss<E: FlowEnv>(
    tape: &mut Tape,
    env: &E,
    trajectories: &[Vec<E::State>],
    flows: &mut dyn FnMut(&mut Tape, &[(E::State, E::State)]) -> Result<Var>,
) -> Result<Var> {
    let mut transitions: Vec<(E::State, E::State)> = Vec::new();
    let mut index: BTreeMap<(E::State, E::State), usize> = BTreeMap::new();
    let mut lookup = |t: (E::State, E::State), list: &mut Vec<(E::State, E::State)>| {
        *index.entry(t.clone()).or_insert_with(|| {
            list.push(t);
            list.len() - 1
        })
    };
    let (mut in_t, mut in_slot, mut out_t, mut out_slot) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rewards = Vec::new();
    for traj in trajectories {
        for s in traj.iter().skip(1) {
            let slot = rewards.len();
            for p in env.parents(s) {
                in_t.push(lookup((p, s.clone()), &mut transitions));
                in_slot.push(slot);
            }
            if env.is_terminal(s) {
                rewards.push(env.reward(s)?);
            } else {
                for c in env.children(s) {
                    out_t.push(lookup((s.clone(), c), &mut transitions));
                    out_slot.push(slot);
                }
                rewards.push(0.0);
            }
        }
    }
    let slots = rewards.len();
    if slots == 0 {
        return Ok(tape.scalar(0.0));
    }
    let reward = tape.constant(Tensor::vector(rewards)?);
    if transitions.is_empty() {
        let sq = tape.mul(reward, reward)?;
        return Ok(tape.sum(sq, None)?);
    }
    let f = flows(tape, &transitions)?;
    let inflow = if in_t.is_empty() {
        tape.constant(Tensor::zeros(&[slots])?)
    } else {
        let g = tape.gather(f, &in_t)?;
        tape.scatter_add(g, &in_slot, slots)?
    };
    let mut outflow = reward;
    if !out_t.is_empty() {
        let g = tape.gather(f, &out_t)?;
        let s = tape.scatter_add(g, &out_slot, slots)?;
        outflow = tape.add(outflow, s)?;
    }
    let resid = tape.sub(inflow, outflow)?;
    let sq = tape.mul(resid, resid)?;
    Ok(tape.sum(sq, None)?)
}

/// Samples `s_0 → … → terminal`, choosing children in proportion to `flow`
/// except with probability `explore`, when the child is uniform.
pub(crate) fn sample_trajectory<E: FlowEnv>(
    env: &E,
    rng: &mut Rng,
    explore: f64,
    flow: &mut dyn FnMut(&E::State, &[E::State]) -> Result<Vec<f64>>,
) -> Result<Vec<E::State>> {
    let mut s = env.initial();
    let mut traj = vec![s.clone()];
    while !env.is_terminal(&s) {
        let kids = env.children(&s);
        if kids.is_empty() {
            break;
        }
        let next = if rng.random::<f64>() < explore {
            rng.random_range(0..kids.len())
        } else {
            let f = flow(&s, &kids)?;
            pick_proportional(&f, rng)
        };
        s = kids[next].clone();
        traj.push(s.clone());
    }
    Ok(traj)
}

fn pick_proportional(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

/// One log-flow parameter per transition of a finite DAG.
#[derive(Debug, Clone)]
pub struct TabularFlow<S: Ord + Clone> {
    transitions: BTreeMap<(S, S), usize>,
    log_flow: Vec<f64>,
}

impl<S: Ord + Clone + Debug> TabularFlow<S> {
    /// Enumerates every state reachable from the initial one.
    pub fn new<E: FlowEnv<State = S>>(env: &E) -> Self {
        let mut transitions = BTreeMap::new();
        let mut seen = BTreeSet::from([env.initial()]);
        let mut stack = vec![env.initial()];
        while let Some(s) = stack.pop() {
            if env.is_terminal(&s) {
                continue;
            }
            for c in env.children(&s) {
                let n = transitions.len();
                transitions.entry((s.clone(), c.clone())).or_insert(n);
                if seen.insert(c.clone()) {
                    stack.push(c);
                }
            }
        }
        let log_flow = vec![0.0; transitions.len()];
        Self { transitions, log_flow }
    }

    pub fn flow(&self, from: &S, to: &S) -> Option<f64> {
        self.transitions.get(&(from.clone(), to.clone())).map(|&i| self.log_flow[i].exp())
    }

    /// Adam on the flow-matching loss of freshly sampled trajectories.
    /// Returns the mean loss per epoch.
    pub fn train<E: FlowEnv<State = S>>(&mut self, env: &E, epochs: usize, batch: usize, lr: f64, explore: f64, seed: u64) -> Result<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let mut adam = Adam::new(AdamConfig { lr, ..AdamConfig::default() });
        let mut store = ParamStore::new();
        store.insert("log_flow", Tensor::vector(self.log_flow.clone())?);
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let trajs = (0..batch)
                .map(|_| sample_trajectory(env, &mut rng, explore, &mut |s, kids| Ok(self.child_flows(s, kids))))
                .collect::<Result<Vec<_>>>()?;
            let mut tape = Tape::new();
            let lf = tape.param(store.get("log_flow").expect("present").clone());
            let flows = tape.exp(lf)?;
            let map = &self.transitions;
            let loss = flow_matching_loss(&mut tape, env, &trajs, &mut |t: &mut Tape, ts: &[(S, S)]| {
                let idx: Vec<usize> = ts.iter().map(|k| map[k]).collect();
                Ok(t.gather(flows, &idx)?)
            })?;
            let g = tape.backward(loss)?;
            losses.push(tape.value(loss).item()?);
            adam.step(&mut store, &BTreeMap::from([("log_flow".to_string(), g.wrt(lf))]))?;
            self.log_flow = store.get("log_flow").expect("present").data().to_vec();
        }
        Ok(losses)
    }

    fn child_flows(&self, s: &S, kids: &[S]) -> Vec<f64> {
        kids.iter().map(|c| self.flow(s, c).unwrap_or(0.0)).collect()
    }

    /// Terminal states reached by `n` rollouts that follow the flow exactly.
    pub fn sample_terminals<E: FlowEnv<State = S>>(&self, env: &E, n: usize, seed: u64) -> Result<BTreeMap<S, usize>> {
        let mut rng = rng_from_seed(seed);
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let t = sample_trajectory(env, &mut rng, 0.0, &mut |s, kids| Ok(self.child_flows(s, kids)))?;
            *counts.entry(t.last().expect("non-empty").clone()).or_insert(0) += 1;
        }
        Ok(counts)
    }
}

/// Connected edge subsets of one graph, grown one edge at a time from the
/// empty set. States are sorted edge-id lists.
pub(crate) struct SubgraphEnv<'a> {
    graph: &'a Graph,
    adj: Vec<Vec<(usize, usize)>>,
    max_edges: usize,
    model: &'a GnnModel,
    target: usize,
    reward_eps: f64,
    cache: RefCell<HashMap<Vec<usize>, f64>>,
}

impl<'a> SubgraphEnv<'a> {
    pub(crate) fn new(graph: &'a Graph, model: &'a GnnModel, target: usize, max_edges: usize, reward_eps: f64) -> Self {
        Self {
            graph,
            adj: graph.adjacency(),
            max_edges,
            model,
            target,
            reward_eps,
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn additions(&self, s: &[usize]) -> Vec<usize> {
        if s.is_empty() {
            return (0..self.graph.num_edges()).collect();
        }
        let mut out = BTreeSet::new();
        for &e in s {
            let (u, v) = self.graph.edges[e];
            for n in [u, v] {
                for &(_, f) in &self.adj[n] {
                    if s.binary_search(&f).is_err() {
                        out.insert(f);
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

fn with_edge(s: &[usize], e: usize) -> Vec<usize> {
    let mut v = s.to_vec();
    let pos = v.binary_search(&e).unwrap_err();
    v.insert(pos, e);
    v
}

impl FlowEnv for SubgraphEnv<'_> {
    type State = Vec<usize>;

    fn initial(&self) -> Vec<usize> {
        Vec::new()
    }

    fn children(&self, s: &Vec<usize>) -> Vec<Vec<usize>> {
        if s.len() >= self.max_edges {
            return Vec::new();
        }
        self.additions(s).into_iter().map(|e| with_edge(s, e)).collect()
    }

    fn parents(&self, s: &Vec<usize>) -> Vec<Vec<usize>> {
        (0..s.len())
            .map(|i| {
                let mut p = s.clone();
                p.remove(i);
                p
            })
            .filter(|p| self.graph.edges_connected(p))
            .collect()
    }

    fn is_terminal(&self, s: &Vec<usize>) -> bool {
        s.len() >= self.max_edges || self.additions(s).is_empty()
    }

    fn reward(&self, s: &Vec<usize>) -> Result<f64> {
        if let Some(&r) = self.cache.borrow().get(s) {
            return Ok(r);
        }
        let mut w = vec![0.0; self.graph.num_edges()];
        for &e in s {
            w[e] = 1.0;
        }
        let r = self.model.predict(self.graph, Some(&w))?.probs[self.target] + self.reward_eps;
        self.cache.borrow_mut().insert(s.clone(), r);
        Ok(r)
    }
}

/// Input rows `[mean of state edge features, added edge features]`.
fn transition_rows(feats: &Tensor, ts: &[(Vec<usize>, Vec<usize>)]) -> Result<Tensor> {
    let w = feats.shape()[1];
    let x = feats.data();
    let mut rows = Vec::with_capacity(ts.len() * 2 * w);
    for (s, c) in ts {
        let mut mean = vec![0.0; w];
        for &e in s {
            for k in 0..w {
                mean[k] += x[e * w + k];
            }
        }
        if !s.is_empty() {
            mean.iter_mut().for_each(|m| *m /= s.len() as f64);
        }
        let added = c.iter().find(|e| s.binary_search(e).is_err()).copied().ok_or_else(|| Error::domain("transition adds no edge"))?;
        rows.extend(mean);
        rows.extend_from_slice(&x[added * w..(added + 1) * w]);
    }
    Ok(Tensor::new(vec![ts.len(), 2 * w], rows)?)
}

fn flows_on_tape(tape: &mut Tape, p: &Bound, feats: &Tensor, ts: &[(Vec<usize>, Vec<usize>)]) -> Result<Var> {
    let x = tape.constant(transition_rows(feats, ts)?);
    let out = mlp_forward(tape, p, "flow", x)?;
    let out = tape.reshape(out, vec![ts.len()])?;
    // Bounded log-flow keeps exp finite; the bound is far above any reward scale here.
    let out = tape.clamp(out, -20.0, 20.0)?;
    Ok(tape.exp(out)?)
}

fn numeric_flows(params: &ParamStore, feats: &Tensor, s: &[usize], kids: &[Vec<usize>]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = bind_store(&mut tape, params, false);
    let ts: Vec<(Vec<usize>, Vec<usize>)> = kids.iter().map(|c| (s.to_vec(), c.clone())).collect();
    let f = flows_on_tape(&mut tape, &p, feats, &ts)?;
    Ok(tape.value(f).data().to_vec())
}

pub(crate) fn train(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<TrainedExplainer> {
    let idx = train_graphs(dataset)?;
    let graphs: Vec<&Graph> = idx.iter().map(|&i| &dataset.graphs[i]).filter(|g| g.num_edges() > 0).collect();
    let targets: Vec<usize> = model.predict_many(&graphs, None)?.iter().map(|p| p.label).collect();
    let mut rng = rng_from_seed(config.seed);
    let width = 2 * model.config.hidden_dim;
    let raw: Vec<Vec<f64>> = graphs.iter().map(|g| raw_edge_features(model, g)).collect::<Result<_>>()?;
    let mut params = ParamStore::new();
    fit_normalizer(&mut params, &raw, width)?;
    mlp_init(&mut params, "flow", &[2 * width, config.hidden_dim, 1], &mut rng)?;
    let feats: Vec<Tensor> = graphs.iter().map(|g| edge_features(model, &params, g)).collect::<Result<_>>()?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut reward_sum, mut steps) = (0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let p = bind_store(&mut tape, &params, true);
            let mut loss: Option<Var> = None;
            for &i in chunk {
                let env = SubgraphEnv::new(graphs[i], model, targets[i], config.k_rl, config.reward_eps);
                let traj = sample_trajectory(&env, &mut rng, config.explore, &mut |s, kids| numeric_flows(&params, &feats[i], s, kids))?;
                reward_sum += env.reward(traj.last().expect("non-empty"))?;
                let f = &feats[i];
                let l = flow_matching_loss(&mut tape, &env, &[traj], &mut |t, ts| flows_on_tape(t, &p, f, ts))?;
                loss = Some(match loss {
                    Some(acc) => tape.add(acc, l)?,
                    None => l,
                });
            }
            let Some(loss) = loss else { continue };
            let loss = tape.mul_scalar(loss, 1.0 / chunk.len() as f64)?;
            let grads = tape.backward(loss)?;
            let named = p
                .iter()
                .filter(|(n, _)| n.starts_with("flow."))
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
            mean_return: Some(reward_sum / graphs.len() as f64),
        });
    }
    Ok(TrainedExplainer {
        config: config.clone(),
        params,
        history,
    })
}

/// Follows the largest flow from the empty state for `k` steps.
pub(crate) fn explain(te: &TrainedExplainer, model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
    let target = model.predict(graph, None)?.label;
    if graph.num_edges() == 0 {
        return Ok(ExplanationMask::with_budget(Vec::new(), k, target));
    }
    let feats = edge_features(model, &te.params, graph)?;
    let env = SubgraphEnv::new(graph, model, target, k, te.config.reward_eps);
    let root_kids = env.children(&Vec::new());
    let root_flows = numeric_flows(&te.params, &feats, &[], &root_kids)?;
    let mut s: Vec<usize> = Vec::new();
    let mut order = Vec::new();
    while !env.is_terminal(&s) {
        let kids = env.children(&s);
        let f = numeric_flows(&te.params, &feats, &s, &kids)?;
        let best = (0..kids.len()).fold(0, |b, i| if f[i] > f[b] { i } else { b });
        let added = kids[best].iter().find(|e| s.binary_search(e).is_err()).copied().expect("child adds an edge");
        order.push(added);
        s = kids[best].clone();
    }
    let weights = trajectory_weights(graph.num_edges(), &order, &root_flows);
    Ok(ExplanationMask::with_budget(weights, k, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// s0 → s1 (terminal, reward 2).
    struct Line;

    impl FlowEnv for Line {
        type State = u8;
        fn initial(&self) -> u8 {
            0
        }
        fn children(&self, s: &u8) -> Vec<u8> {
            if *s == 0 {
                vec![1]
            } else {
                vec![]
            }
        }
        fn parents(&self, s: &u8) -> Vec<u8> {
            if *s == 1 {
                vec![0]
            } else {
                vec![]
            }
        }
        fn is_terminal(&self, s: &u8) -> bool {
            *s == 1
        }
        fn reward(&self, _: &u8) -> Result<f64> {
            Ok(2.0)
        }
    }

    fn line_loss(f: f64) -> f64 {
        let mut tape = Tape::new();
        let l = flow_matching_loss(&mut tape, &Line, &[vec![0, 1]], &mut |t, ts| {
            assert_eq!(ts, &[(0, 1)]);
            Ok(t.constant(Tensor::vector(vec![f]).unwrap()))
        })
        .unwrap();
        tape.value(l).item().unwrap()
    }

    #[test]
    fn single_transition_loss() {
        assert_eq!(line_loss(2.0), 0.0);
        assert_eq!(line_loss(3.0), 1.0);
        assert!(line_loss(1.5) > 0.0);
    }

    #[test]
    fn subgraph_env_structure() {
        let g = Graph::with_constant_features(4, vec![(0, 1), (1, 2), (2, 3)], 1, 1, Some(0)).unwrap();
        let model = GnnModel::init(crate::gnn::GnnConfig { hidden_dim: 4, ..Default::default() }, 0).unwrap();
        let env = SubgraphEnv::new(&g, &model, 0, 2, 0.01);
        assert_eq!(env.children(&vec![]).len(), 3);
        assert_eq!(env.children(&vec![1]), vec![vec![0, 1], vec![1, 2]]);
        // {0, 2} is not connected, so only {0,1} minus 0 and minus 1 remain valid.
        assert_eq!(env.parents(&vec![0, 1]), vec![vec![1], vec![0]]);
        assert!(env.is_terminal(&vec![0, 1]));
        let r = env.reward(&vec![0, 1]).unwrap();
        assert!(r > 0.01 && r <= 1.01);
    }
}
