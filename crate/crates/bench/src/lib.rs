//! Fixtures shared by the benchmarks.

use genexp::explainers::{train_explainer, ExplainerConfig, Family, TrainedExplainer};
use genexp::gnn::train_base;
use genexp::graphdata::{gen_ba2motifs, gen_ba2motifs_with_base, split, SplitPlan};
use genexp::{Dataset, GnnConfig, GnnModel};

pub struct Fixture {
    pub dataset: Dataset,
    pub model: GnnModel,
    pub explainer: TrainedExplainer,
}

/// A briefly trained model and mask generator on a small BA-2Motifs corpus.
/// Timings do not depend on how well either is trained.
pub fn fixture(graphs: usize, seed: u64) -> Fixture {
    let dataset = split(&gen_ba2motifs(graphs, seed).expect("generate"), SplitPlan::STANDARD, seed).expect("split");
    let cfg = GnnConfig {
        max_epochs: 5,
        ..GnnConfig::default()
    };
    let model = train_base(&dataset, &cfg, seed).expect("train").model;
    let ecfg = ExplainerConfig {
        epochs: 2,
        seed,
        ..ExplainerConfig::for_family(Family::MaskGen)
    };
    let explainer = train_explainer(&model, &dataset, &ecfg).expect("explainer");
    Fixture { dataset, model, explainer }
}

/// Graphs on a 5-node base, small enough for exhaustive search.
pub fn small_graphs(count: usize, seed: u64) -> Dataset {
    gen_ba2motifs_with_base(count, 5, seed).expect("generate")
}
