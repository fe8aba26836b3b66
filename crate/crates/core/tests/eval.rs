mod common;

use common::small_trained;
use genexp::eval::{
    brute_force_best_subgraph, evaluate, fidelity_acc, fidelity_from_indicators, generalization_gap, ground_truth_agreement,
    generalization_gap_split, hard_mask_probability, mann_whitney_auc, sparsity_filter, time_calls, EvalOptions, EvalReport,
    TimingStats, ORACLE_MAX_EDGES,
};
use genexp::graphdata::{split, SplitPlan};
use genexp::explainers::{explain_random, train_explainer, ExplainerConfig, Family};
use genexp::{Error, Graph, Split};
use proptest::prelude::*;

fn cycle_with_pendant() -> Graph {
    Graph::with_constant_features(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (4, 5)], 1, 1, Some(0)).unwrap()
}

/// Best subset by recursion over sizes, independent of the bitmask search.
fn best_by_recursion(model: &genexp::GnnModel, g: &Graph, k: usize, target: usize) -> f64 {
    fn go(model: &genexp::GnnModel, g: &Graph, k: usize, target: usize, start: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        let hard: Vec<bool> = (0..g.num_edges()).map(|i| chosen.contains(&i)).collect();
        *best = best.max(hard_mask_probability(model, g, &hard, target).unwrap());
        if chosen.len() == k {
            return;
        }
        for e in start..g.num_edges() {
            chosen.push(e);
            go(model, g, k, target, e + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(model, g, k, target, 0, &mut Vec::new(), &mut best);
    best
}

#[test]
fn oracle_matches_independent_enumeration() {
    let (_, model) = small_trained();
    let g = cycle_with_pendant();
    for k in 1..=6 {
        for target in 0..2 {
            let r = brute_force_best_subgraph(model, &g, k, target, false).unwrap();
            assert!(r.edges.len() <= k);
            assert_eq!(r.probability, best_by_recursion(model, &g, k, target));
            let hard: Vec<bool> = (0..6).map(|i| r.edges.contains(&i)).collect();
            assert_eq!(hard_mask_probability(model, &g, &hard, target).unwrap(), r.probability);
        }
    }
    let connected = brute_force_best_subgraph(model, &g, 3, 0, true).unwrap();
    assert!(g.edges_connected(&connected.edges));
}

#[test]
fn oracle_picks_the_cycle_for_a_cycle_detector() {
    // class 0 of the training corpus is the one carrying a 5-cycle
    let (_, model) = small_trained();
    let g = cycle_with_pendant();
    let r = brute_force_best_subgraph(model, &g, 5, 0, true).unwrap();
    let mut picked: Vec<_> = r.edges.iter().map(|&i| g.edges[i]).collect();
    picked.sort_unstable();
    assert_eq!(picked, vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]);
}

#[test]
fn oracle_refuses_large_graphs() {
    let (ds, model) = small_trained();
    let g = &ds.graphs[0];
    assert!(g.num_edges() > ORACLE_MAX_EDGES);
    assert!(matches!(brute_force_best_subgraph(model, g, 6, 0, false), Err(Error::Refused(_))));
}

#[test]
fn four_instance_fidelity_fixture() {
    assert_eq!(fidelity_from_indicators([(true, true), (false, false), (true, true), (true, false)]).unwrap(), 0.25);
    // the same fixture through the model: three explanations leave the
    // prediction alone, one changes it
    let (ds, model) = small_trained();
    let g = ds
        .graphs
        .iter()
        .find(|g| model.predict(g, None).unwrap().label != model.predict(g, Some(&vec![0.0; g.num_edges()])).unwrap().label)
        .expect("some graph whose empty explanation changes the prediction");
    let mut labeled = g.clone();
    labeled.label = Some(model.predict(g, None).unwrap().label);
    let graphs = vec![&labeled; 4];
    let full = vec![true; labeled.num_edges()];
    let empty = vec![false; labeled.num_edges()];
    let f = fidelity_acc(model, &graphs, &[full.clone(), full.clone(), full, empty]).unwrap();
    assert_eq!(f, 0.25);
}

#[test]
fn evaluation_report_is_self_consistent() {
    let (ds, model) = small_trained();
    let te = train_explainer(model, ds, &ExplainerConfig { epochs: 3, ..ExplainerConfig::for_family(Family::MaskGen) }).unwrap();
    let test = ds.indices(Split::Test);
    let serial = evaluate(&te, model, ds, &test, &EvalOptions::default()).unwrap();
    let parallel = evaluate(&te, model, ds, &test, &EvalOptions { workers: 3, ..EvalOptions::default() }).unwrap();
    serial.verify().unwrap();
    assert_eq!(serial.faithfulness, 1.0 - serial.fidelity_acc);
    let strip = |r: &EvalReport| r.records.iter().map(|x| (x.graph_index, x.explanation_correct, x.num_hard_edges)).collect::<Vec<_>>();
    assert_eq!(strip(&serial), strip(&parallel));
    assert_eq!(serial.faithfulness, parallel.faithfulness);
    let auc = serial.gt_auc.unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let seen: Vec<&Graph> = test.iter().map(|&i| &ds.graphs[i]).collect();
    assert!(generalization_gap(&te, model, &seen, &[], 6).is_err());
    assert_eq!(generalization_gap(&te, model, &seen, &seen, 6).unwrap(), 0.0);
}

#[test]
fn agreement_pools_edges_across_graphs() {
    let ds = genexp::graphdata::gen_ba2motifs(6, 0).unwrap();
    let graphs: Vec<&Graph> = ds.graphs.iter().collect();
    // weights equal to the ground truth rank perfectly
    let masks: Vec<_> = graphs
        .iter()
        .zip(&ds.annotations)
        .map(|(g, a)| {
            let w = a.as_ref().unwrap().edge_labels(g).iter().map(|&b| f64::from(u8::from(b))).collect();
            genexp::explainers::ExplanationMask::with_budget(w, 6, 0)
        })
        .collect();
    let refs: Vec<_> = masks.iter().collect();
    let agree = ground_truth_agreement(&graphs, &refs, &ds.annotations);
    assert_eq!(agree.auc, Some(1.0));
    assert_eq!(agree.missing, 0);
}

#[test]
fn timing_helpers() {
    let ds = genexp::graphdata::gen_ba2motifs(8, 0).unwrap();
    let graphs: Vec<&Graph> = ds.graphs.iter().collect();
    let samples = time_calls(&graphs, |g| {
        explain_random(g, 6, 0);
        Ok(())
    })
    .unwrap();
    assert_eq!(samples.len(), 8);
    let s = TimingStats::from_samples(&samples).unwrap();
    assert!(s.mean_ms >= 0.0 && s.stderr_ms >= 0.0 && s.samples == 8);
    assert!(TimingStats::from_samples(&[]).is_err());
}

#[test]
fn uniform_random_weights_have_chance_auc() {
    let ds = genexp::graphdata::gen_ba2motifs(1000, 11).unwrap();
    let graphs: Vec<&Graph> = ds.graphs.iter().collect();
    let masks: Vec<_> = graphs.iter().enumerate().map(|(i, g)| explain_random(g, 6, i as u64)).collect();
    let refs: Vec<_> = masks.iter().collect();
    let auc = ground_truth_agreement(&graphs, &refs, &ds.annotations).auc.unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "AUC {auc}");
}

#[test]
fn random_baseline_gap_is_small() {
    let (_, model) = small_trained();
    let ds = split(&genexp::graphdata::gen_ba2motifs(300, 5).unwrap(), SplitPlan::SEEN_UNSEEN, 5).unwrap();
    let gaps: Vec<f64> = (0..5)
        .map(|seed| {
            let cfg = ExplainerConfig { seed, ..ExplainerConfig::for_family(Family::RandomBaseline) };
            let te = train_explainer(model, &ds, &cfg).unwrap();
            generalization_gap_split(&te, model, &ds, 6).unwrap()
        })
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean.abs() <= 0.1, "gaps {gaps:?}");
}

#[test]
fn timing_grows_with_graph_size() {
    let (ds, model) = small_trained();
    let te = train_explainer(model, ds, &ExplainerConfig { epochs: 1, ..ExplainerConfig::for_family(Family::MaskGen) }).unwrap();
    // bases sized so the graphs have 25, 40 and 67 nodes
    let medians: Vec<f64> = [20, 35, 62]
        .iter()
        .map(|&base| {
            let corpus = genexp::graphdata::gen_ba2motifs_with_base(30, base, 3).unwrap();
            let graphs: Vec<&Graph> = corpus.graphs.iter().collect();
            (0..3)
                .map(|_| {
                    let mut t = time_calls(&graphs, |g| te.explain(model, g, 6).map(|_| ())).unwrap();
                    t.sort_by(f64::total_cmp);
                    t[t.len() / 2]
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    assert!(medians[0] < medians[1] && medians[1] < medians[2], "median ms {medians:?}");
}

/// Pairwise-comparison definition of the AUC.
fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_pair_counting(data in prop::collection::vec((0u8..5, any::<bool>()), 0..40)) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        match (mann_whitney_auc(&scores, &labels), auc_by_pairs(&scores, &labels)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn sparsity_filter_matches_counting(edges in prop::collection::vec(0usize..30, 0..60), cap in 1usize..30) {
        let records: Vec<_> = edges
            .iter()
            .enumerate()
            .map(|(i, &e)| genexp::eval::EvalRecord {
                graph_index: i,
                seed: 0,
                initial_correct: true,
                explanation_correct: true,
                num_hard_edges: e,
                gt_jaccard: None,
                wall_time_ms: 0.0,
            })
            .collect();
        let (kept, frac) = sparsity_filter(&records, cap);
        let count = edges.iter().filter(|&&e| e < cap).count();
        prop_assert_eq!(kept.len(), count);
        let want = if edges.is_empty() { 1.0 } else { count as f64 / edges.len() as f64 };
        prop_assert_eq!(frac, want);
        prop_assert!(kept.iter().all(|r| r.num_hard_edges < cap));
    }

    #[test]
    fn report_survives_json_round_trip(times in prop::collection::vec(0.0f64..1e3, 1..40)) {
        let records: Vec<_> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| genexp::eval::EvalRecord {
                graph_index: i,
                seed: 0,
                initial_correct: i % 3 != 0,
                explanation_correct: i % 2 == 0,
                num_hard_edges: i % 25,
                gt_jaccard: Some(t / 1e3),
                wall_time_ms: t,
            })
            .collect();
        let r = EvalReport::from_records("maskgen", "fixture", 6, 20, records).unwrap();
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert!(back.verify().is_ok());
    }

    #[test]
    fn faithfulness_complements_fidelity(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
        let records: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| genexp::eval::EvalRecord {
                graph_index: i,
                seed: 0,
                initial_correct: a,
                explanation_correct: b,
                num_hard_edges: 6,
                gt_jaccard: None,
                wall_time_ms: 0.1,
            })
            .collect();
        let r = EvalReport::from_records("maskgen", "fixture", 6, 20, records).unwrap();
        prop_assert_eq!(r.faithfulness, 1.0 - r.fidelity_acc);
        prop_assert_eq!(r.fidelity_acc, fidelity_from_indicators(pairs).unwrap());
        r.verify().unwrap();
    }
}
