//! Generative explanations for graph neural networks.
//!
//! The crate trains small message-passing classifiers on synthetic motif
//! datasets and explains their predictions with generators that minimize an
//! attribution loss plus a pluggable information constraint.
//!
//! - [`tensor`]: dense tensors, reverse-mode autodiff, Adam, checkpoints
//! - [`graphdata`]: graphs, motif dataset generators, splits, JSON I/O
//! - [`gnn`]: the base classifier being explained
//! - [`constraints`]: information constraints on explanations
//! - [`explainers`]: mask generation, VGAE, policy gradient, flow matching,
//!   counterfactual and model-level explainers, plus baselines
//! - [`eval`]: fidelity, timing, generalization, ground-truth agreement and
//!   the brute-force subgraph oracle

pub mod constraints;
pub mod error;
pub mod eval;
pub mod explainers;
pub mod gnn;
pub mod graphdata;
pub mod tensor;

pub use error::{Error, Result};
pub use graphdata::{Dataset, Graph, MotifAnnotation, Split};
pub use gnn::{GnnConfig, GnnModel, LayerKind};
pub use tensor::{Tape, Tensor, Var};

/// Deterministic generator used for every stochastic step.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds a fresh [`Rng`].
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed, e.g. per graph or per run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
