//! Generative explainers trained against a frozen base model.
//!
//! Every trainable family minimizes an attribution loss plus an information
//! constraint, and produces per-edge weights in `[0, 1]` aligned with the
//! graph's canonical edge order.

mod baselines;
pub(crate) mod common;
mod counterfactual;
pub mod flow;
mod maskgen;
mod model_level;
mod rl;
mod vgae;

pub use baselines::{edge_weight_gradient, explain_random, explain_saliency};
pub use counterfactual::{explain_counterfactual, CounterfactualExplanation};
pub use flow::{flow_matching_loss, FlowEnv, TabularFlow};
pub use model_level::{model_level_generate, model_level_vote, ModelLevelExplanation};
pub use rl::{average_return, policy_distribution};
pub use vgae::{gaussian_kl, gaussian_kl_tape};

use serde::{Deserialize, Serialize};

use crate::constraints::{hard_size_select, InfoConstraint, PROB_EPS};
use crate::gnn::GnnModel;
use crate::graphdata::{Dataset, Graph};
use crate::tensor::{ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(rename = "maskgen")]
    MaskGen,
    Vgae,
    RlMdp,
    FlowDag,
    Counterfactual,
    ModelLevel,
    Saliency,
    #[serde(rename = "random")]
    RandomBaseline,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::MaskGen,
        Family::Vgae,
        Family::RlMdp,
        Family::FlowDag,
        Family::Counterfactual,
        Family::ModelLevel,
        Family::Saliency,
        Family::RandomBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::MaskGen => "maskgen",
            Family::Vgae => "vgae",
            Family::RlMdp => "rl_mdp",
            Family::FlowDag => "flow_dag",
            Family::Counterfactual => "counterfactual",
            Family::ModelLevel => "model_level",
            Family::Saliency => "saliency",
            Family::RandomBaseline => "random",
        }
    }

    /// Families whose explanations preserve the prediction (as opposed to
    /// flipping it).
    pub fn is_factual(self) -> bool {
        self != Family::Counterfactual
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s || (s == "random_baseline" && *f == Family::RandomBaseline))
            .ok_or_else(|| format!("unknown explainer family {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub family: Family,
    pub constraint: InfoConstraint,
    /// Gumbel temperature, annealed geometrically from start to end.
    pub tau_start: f64,
    pub tau_end: f64,
    pub epochs: usize,
    pub lr: f64,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Weight of the latent Gaussian KL (VGAE), separate from the constraint.
    pub latent_kl_weight: f64,
    /// Episode length for the RL and flow families.
    pub k_rl: usize,
    /// Added to terminal rewards of the flow family.
    pub reward_eps: f64,
    /// Chance of a uniformly random action while sampling flow trajectories.
    pub explore: f64,
    /// Edge budget used where the family needs one during training.
    pub budget: usize,
    /// Class for model-level generation.
    pub target_class: usize,
    /// Use a Gumbel sample instead of the deterministic probabilities at
    /// inference.
    pub sample_at_inference: bool,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            family: Family::MaskGen,
            constraint: InfoConstraint::default(),
            tau_start: 1.0,
            tau_end: 0.1,
            epochs: 30,
            lr: 0.01,
            hidden_dim: 64,
            batch_size: 32,
            latent_dim: 16,
            latent_kl_weight: 0.01,
            k_rl: 6,
            reward_eps: 0.01,
            explore: 0.1,
            budget: 6,
            target_class: 1,
            sample_at_inference: false,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn for_family(family: Family) -> Self {
        let mut c = Self {
            family,
            ..Self::default()
        };
        match family {
            Family::Counterfactual => c.constraint = InfoConstraint::Variational { prior: 0.1, weight: 1.0 },
            Family::MaskGen => c.constraint = InfoConstraint::Variational { prior: 0.3, weight: 0.4 },
            // The shared generator sees every class graph; a weak prior keeps
            // it near the full graph and lets the vote do the pruning.
            Family::ModelLevel => c.constraint = InfoConstraint::Variational { prior: 0.3, weight: 0.005 },
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.constraint.validate()?;
        if !(self.tau_start >= self.tau_end && self.tau_end > 0.0) {
            return Err(Error::domain(format!(
                "need tau_start >= tau_end > 0, got {} and {}",
                self.tau_start, self.tau_end
            )));
        }
        if !(self.lr > 0.0) || self.hidden_dim < 1 || self.batch_size < 1 || self.latent_dim < 1 {
            return Err(Error::domain("lr, hidden_dim, batch_size and latent_dim must be positive"));
        }
        if self.k_rl < 1 || self.budget < 1 {
            return Err(Error::domain("k_rl and budget must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.explore) || self.reward_eps < 0.0 {
            return Err(Error::domain("explore must lie in [0, 1] and reward_eps be >= 0"));
        }
        Ok(())
    }

    /// Temperature for `epoch` of `epochs`.
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.tau_start;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(t)
    }
}

/// Per-edge importance for one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMask {
    pub edge_weights: Vec<f64>,
    pub hard_edges: Option<Vec<bool>>,
    pub target_label: usize,
}

impl ExplanationMask {
    /// Weights plus the top-`k` hard mask.
    pub fn with_budget(edge_weights: Vec<f64>, k: usize, target_label: usize) -> Self {
        let hard = hard_size_select(&edge_weights, k);
        Self {
            edge_weights,
            hard_edges: Some(hard),
            target_label,
        }
    }

    pub fn hard_edge_ids(&self) -> Vec<usize> {
        self.hard_edges
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// The hard mask as 0/1 edge weights.
    pub fn hard_weights(&self) -> Vec<f64> {
        match &self.hard_edges {
            Some(h) => h.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            None => self.edge_weights.clone(),
        }
    }
}

/// One epoch of the unified objective, averaged over steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub attr: f64,
    pub info: f64,
    pub total: f64,
    /// Mean episode return, for the sequential families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_return: Option<f64>,
}

/// `σ((logit ε + logit p) / τ)` for a single edge.
pub fn gumbel_sample(p: f64, tau: f64, eps: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let eps = eps.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let z = ((eps / (1.0 - eps)).ln() + (p / (1.0 - p)).ln()) / tau;
    1.0 / (1.0 + (-z).exp())
}

pub fn gumbel_sample_rng(p: f64, tau: f64, rng: &mut impl rand::Rng) -> f64 {
    gumbel_sample(p, tau, rng.random::<f64>())
}

/// Relaxed Bernoulli sample on the tape; `noise` holds one uniform draw per
/// entry of `probs` and is treated as a constant.
pub fn gumbel_sample_tape(tape: &mut Tape, probs: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    let p = tape.clamp(probs, PROB_EPS, 1.0 - PROB_EPS)?;
    let lp = tape.log(p)?;
    let negp = tape.neg(p)?;
    let q = tape.add_scalar(negp, 1.0)?;
    let lq = tape.log(q)?;
    let logit = tape.sub(lp, lq)?;
    let noise_logit: Vec<f64> = noise
        .iter()
        .map(|&e| {
            let e = e.clamp(PROB_EPS, 1.0 - PROB_EPS);
            (e / (1.0 - e)).ln()
        })
        .collect();
    let shape = tape.value(probs).shape().to_vec();
    let n = tape.constant(Tensor::new(shape, noise_logit)?);
    let z = tape.add(logit, n)?;
    let z = tape.mul_scalar(z, 1.0 / tau)?;
    Ok(tape.sigmoid(z)?)
}

/// Uniform draws for [`gumbel_sample_tape`].
pub(crate) fn uniform_noise(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// A trained explainer of any family, ready for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedExplainer {
    pub config: ExplainerConfig,
    pub params: ParamStore,
    pub history: Vec<LossRecord>,
}

impl TrainedExplainer {
    pub fn family(&self) -> Family {
        self.config.family
    }

    /// Rebuilds an explainer from stored weights.
    pub fn from_params(config: ExplainerConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params,
            history: Vec::new(),
        })
    }

    /// Explanation of `graph` with a top-`k` hard mask. Never mutates the
    /// explainer or the model.
    pub fn explain(&self, model: &GnnModel, graph: &Graph, k: usize) -> Result<ExplanationMask> {
        if k < 1 {
            return Err(Error::domain("explanation budget K must be >= 1"));
        }
        match self.config.family {
            Family::MaskGen | Family::ModelLevel => maskgen::explain(self, model, graph, k),
            Family::Counterfactual => {
                let ce = explain_counterfactual(self, model, graph, k)?;
                Ok(ce.as_mask())
            }
            Family::Vgae => vgae::explain(self, model, graph, k),
            Family::RlMdp => rl::explain(self, model, graph, k),
            Family::FlowDag => flow::explain(self, model, graph, k),
            Family::Saliency => explain_saliency(model, graph, k),
            Family::RandomBaseline => {
                let mut m = explain_random(graph, k, self.config.seed);
                m.target_label = model.predict(graph, None)?.label;
                Ok(m)
            }
        }
    }
}

/// Trains the family named in `config` on the train split of `dataset`.
pub fn train_explainer(model: &GnnModel, dataset: &Dataset, config: &ExplainerConfig) -> Result<TrainedExplainer> {
    config.validate()?;
    match config.family {
        Family::MaskGen => maskgen::train(model, dataset, config, maskgen::Objective::Factual),
        Family::Counterfactual => maskgen::train(model, dataset, config, maskgen::Objective::Counterfactual),
        Family::ModelLevel => model_level::train(model, dataset, config),
        Family::Vgae => vgae::train(model, dataset, config),
        Family::RlMdp => rl::train(model, dataset, config),
        Family::FlowDag => flow::train(model, dataset, config),
        Family::Saliency | Family::RandomBaseline => Ok(TrainedExplainer {
            config: config.clone(),
            params: ParamStore::new(),
            history: Vec::new(),
        }),
    }
}

/// Explainer-side training graphs: the train split, or an error if it is empty.
pub(crate) fn train_graphs(dataset: &Dataset) -> Result<Vec<usize>> {
    let idx = dataset.indices(crate::graphdata::Split::Train);
    if idx.is_empty() {
        return Err(Error::domain("explainer training needs a non-empty train split"));
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gumbel_examples() {
        for tau in [0.05, 1.0, 7.0] {
            assert_eq!(gumbel_sample(0.5, tau, 0.5), 0.5);
        }
        assert!((gumbel_sample(0.9, 1.0, 0.5) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn gumbel_tape_matches_scalar() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.2, 0.5, 0.9]).unwrap());
        let noise = [0.3, 0.5, 0.77];
        let m = gumbel_sample_tape(&mut tape, p, 0.7, &noise).unwrap();
        for (i, (&pi, &e)) in [0.2, 0.5, 0.9].iter().zip(&noise).enumerate() {
            assert!((tape.value(m).data()[i] - gumbel_sample(pi, 0.7, e)).abs() < 1e-12);
        }
    }

    #[test]
    fn config_checks() {
        assert!(ExplainerConfig::default().validate().is_ok());
        let bad = ExplainerConfig {
            tau_start: 0.1,
            tau_end: 1.0,
            ..ExplainerConfig::default()
        };
        assert!(bad.validate().is_err());
        let c = ExplainerConfig::default();
        assert_eq!(c.tau_at(0), 1.0);
        assert!((c.tau_at(c.epochs - 1) - 0.1).abs() < 1e-12);
        assert_eq!("rl-mdp".parse::<Family>().unwrap(), Family::RlMdp);
        assert_eq!("random".parse::<Family>().unwrap(), Family::RandomBaseline);
    }

    #[test]
    fn mask_budget() {
        let m = ExplanationMask::with_budget(vec![0.1, 0.9, 0.5, 0.5], 2, 1);
        assert_eq!(m.hard_edge_ids(), vec![1, 2]);
        assert_eq!(m.hard_weights(), vec![0.0, 1.0, 1.0, 0.0]);
    }
}
