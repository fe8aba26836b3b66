//! Information constraints that keep explanations small.
//!
//! Size and sparsity budgets act at extraction time through top-K
//! selection. The soft size distance and the Bernoulli KL bound are
//! differentiable penalties added to the attribution loss during training.

use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, Var};
use crate::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before any logarithm.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMetric {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum InfoConstraint {
    /// At most `k` edges.
    HardSize { k: usize },
    /// At most `ceil(ratio · |E|)` edges.
    Sparsity { ratio: f64 },
    /// `weight · d(G, G')` between adjacency matrices.
    SoftSize { metric: SizeMetric, weight: f64 },
    /// `weight · Σ KL(Bern(p_i) ‖ Bern(prior))`.
    Variational { prior: f64, weight: f64 },
}

impl Default for InfoConstraint {
    fn default() -> Self {
        InfoConstraint::Variational {
            prior: 0.3,
            weight: 1.0,
        }
    }
}

impl InfoConstraint {
    pub const DEFAULT_SOFT_SIZE: InfoConstraint = InfoConstraint::SoftSize {
        metric: SizeMetric::L1,
        weight: 0.005,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            InfoConstraint::HardSize { k } if k < 1 => Err(Error::domain("hard size K must be >= 1")),
            InfoConstraint::Sparsity { ratio } if !(ratio > 0.0 && ratio < 1.0) => {
                Err(Error::domain(format!("sparsity ratio {ratio} outside (0, 1)")))
            }
            InfoConstraint::SoftSize { weight, .. } | InfoConstraint::Variational { weight, .. } if weight < 0.0 => {
                Err(Error::domain("constraint weight must be >= 0"))
            }
            InfoConstraint::Variational { prior, .. } if !(prior > 0.0 && prior < 1.0) => {
                Err(Error::domain(format!("prior {prior} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InfoConstraint::HardSize { .. } => "hard_size",
            InfoConstraint::Sparsity { .. } => "sparsity",
            InfoConstraint::SoftSize { .. } => "soft_size",
            InfoConstraint::Variational { .. } => "variational",
        }
    }

    /// Edge budget for extraction; `fallback` applies to the soft constraints.
    pub fn budget(&self, num_edges: usize, fallback: usize) -> usize {
        match *self {
            InfoConstraint::HardSize { k } => k,
            InfoConstraint::Sparsity { ratio } => sparsity_to_size(num_edges, ratio),
            _ => fallback,
        }
    }

    /// Differentiable penalty on an explanatory substructure, given its edge
    /// probabilities and the (possibly sampled) mask that selects it.
    ///
    /// The soft size distance is measured between the input and the input
    /// with the explanatory edges removed, i.e. it charges the explanatory
    /// volume. For counterfactuals the explanatory part is the deletion set,
    /// which makes this the distance between the input and the retained graph.
    /// Budget constraints contribute no penalty.
    pub fn penalty(&self, tape: &mut Tape, probs: Var, mask: Var) -> Result<Option<Var>> {
        Ok(match *self {
            InfoConstraint::HardSize { .. } | InfoConstraint::Sparsity { .. } => None,
            InfoConstraint::SoftSize { metric, weight } => {
                let neg = tape.neg(mask)?;
                let retained = tape.add_scalar(neg, 1.0)?;
                Some(soft_size_loss(tape, retained, metric, weight)?)
            }
            InfoConstraint::Variational { prior, weight } => Some(variational_loss(tape, probs, prior, weight)?),
        })
    }
}

/// Top-`k` edges by weight as a 0/1 mask; ties go to the lower edge index.
pub fn hard_size_select(weights: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut out = vec![false; weights.len()];
    for &i in order.iter().take(k.min(weights.len())) {
        out[i] = true;
    }
    out
}

/// Edge indices selected by [`hard_size_select`], ascending.
pub fn top_k_indices(weights: &[f64], k: usize) -> Vec<usize> {
    hard_size_select(weights, k)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect()
}

/// `ceil(ratio · num_edges)`, at least one.
pub fn sparsity_to_size(num_edges: usize, ratio: f64) -> usize {
    // Products like 0.1 · 30 land a hair above the integer.
    let raw = ratio * num_edges as f64;
    ((raw - 1e-9).ceil() as usize).max(1)
}

/// `weight · ‖1 − mask‖` over existing edges, where `mask` is the retained
/// graph's mask. Absent edges agree in both adjacencies and add nothing.
pub fn soft_size_loss(tape: &mut Tape, mask: Var, metric: SizeMetric, weight: f64) -> Result<Var> {
    let neg = tape.neg(mask)?;
    let diff = tape.add_scalar(neg, 1.0)?;
    let dist = match metric {
        SizeMetric::L1 => tape.sum(diff, None)?,
        SizeMetric::L2 => {
            let sq = tape.mul(diff, diff)?;
            let s = tape.sum(sq, None)?;
            tape.sqrt(s)?
        }
    };
    Ok(tape.mul_scalar(dist, weight)?)
}

/// Plain-number version of [`soft_size_loss`].
pub fn soft_size_value(mask: &[f64], metric: SizeMetric, weight: f64) -> f64 {
    let d = mask.iter().map(|m| 1.0 - m);
    weight
        * match metric {
            SizeMetric::L1 => d.map(f64::abs).sum(),
            SizeMetric::L2 => d.map(|x| x * x).sum::<f64>().sqrt(),
        }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Closed-form `KL(Bern(p) ‖ Bern(q))` in nats, after clamping both.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let (p, q) = (clamp_prob(p), clamp_prob(q));
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// `weight · Σ_i KL(Bern(p_i) ‖ Bern(prior))` on the tape.
pub fn variational_loss(tape: &mut Tape, probs: Var, prior: f64, weight: f64) -> Result<Var> {
    let q = clamp_prob(prior);
    let p = tape.clamp(probs, PROB_EPS, 1.0 - PROB_EPS)?;
    let negp = tape.neg(p)?;
    let one_minus = tape.add_scalar(negp, 1.0)?;
    let lp = tape.log(p)?;
    let l1p = tape.log(one_minus)?;
    let a = tape.add_scalar(lp, -q.ln())?;
    let b = tape.add_scalar(l1p, -(1.0 - q).ln())?;
    let ta = tape.mul(p, a)?;
    let tb = tape.mul(one_minus, b)?;
    let terms = tape.add(ta, tb)?;
    let s = tape.sum(terms, None)?;
    Ok(tape.mul_scalar(s, weight)?)
}

/// Plain-number version of [`variational_loss`].
pub fn variational_value(probs: &[f64], prior: f64, weight: f64) -> f64 {
    weight * probs.iter().map(|&p| bernoulli_kl(p, prior)).sum::<f64>()
}

/// Convenience: evaluates a tape loss on plain numbers.
#[cfg(test)]
pub(crate) fn eval_on_tape(values: &[f64], f: impl Fn(&mut Tape, Var) -> Result<Var>) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let x = tape.param(crate::tensor::Tensor::vector(values.to_vec())?);
    let y = f(&mut tape, x)?;
    let g = tape.backward(y)?;
    Ok((tape.value(y).item()?, g.wrt(x).into_data()))
}
