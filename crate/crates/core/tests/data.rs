use std::collections::BTreeSet;

use genexp::graphdata::{
    gen_ba2motifs, gen_ba_multishapes, is_isomorphic, read_graphs, split, write_graphs, Motif, SplitPlan,
};
use genexp::Split;
use proptest::prelude::*;

#[test]
fn ba2motifs_labels_alternate_with_motifs() {
    let ds = gen_ba2motifs(20, 4).unwrap();
    let house = Motif::House.graph(1, 1);
    let cycle = Motif::Cycle.graph(1, 1);
    for (i, (g, ann)) in ds.graphs.iter().zip(&ds.annotations).enumerate() {
        assert_eq!(g.label, Some(i % 2));
        assert_eq!(g.num_components(), 1);
        let ann = ann.as_ref().unwrap();
        let ids = ann.edge_ids(g);
        assert_eq!(ids.len(), ann.ground_truth_edges.len());
        let motif = g.edge_subgraph(&ids);
        assert!(is_isomorphic(&motif, if i % 2 == 1 { &house } else { &cycle }));
        // 20-node tree, one bridge, then the motif
        assert_eq!(g.num_edges(), 19 + 1 + motif.num_edges());
    }
}

#[test]
fn multishapes_labels_follow_motif_count() {
    let ds = gen_ba_multishapes(40, 2).unwrap();
    for (g, ann) in ds.graphs.iter().zip(&ds.annotations) {
        let names = &ann.as_ref().unwrap().motif_names;
        assert_eq!(g.label, Some(usize::from(names.len() == 2)));
    }
}

#[test]
fn generation_is_seeded() {
    assert_eq!(gen_ba2motifs(10, 1).unwrap(), gen_ba2motifs(10, 1).unwrap());
    assert_ne!(gen_ba2motifs(10, 1).unwrap().graphs, gen_ba2motifs(10, 2).unwrap().graphs);
}

#[test]
fn json_round_trip_keeps_splits_and_annotations() {
    let ds = split(&gen_ba2motifs(30, 8).unwrap(), SplitPlan::SEEN_UNSEEN, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graphs.json");
    write_graphs(&ds, &path).unwrap();
    assert_eq!(read_graphs(&path).unwrap(), ds);
}

#[test]
fn malformed_json_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"graphs\": [").unwrap();
    assert!(matches!(read_graphs(&path), Err(genexp::Error::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn splits_partition_and_stratify(seed in any::<u64>(), count in 40usize..120, seen_unseen in any::<bool>()) {
        let plan = if seen_unseen { SplitPlan::SEEN_UNSEEN } else { SplitPlan::STANDARD };
        let ds = split(&gen_ba2motifs(count, seed).unwrap(), plan, seed).unwrap();
        let mut all = BTreeSet::new();
        for s in [Split::Train, Split::Val, Split::Test, Split::Unseen] {
            let idx = ds.indices(s);
            for i in &idx {
                prop_assert!(all.insert(*i));
            }
            if !idx.is_empty() {
                let ones = idx.iter().filter(|&&i| ds.graphs[i].label == Some(1)).count();
                let frac = ones as f64 / idx.len() as f64;
                prop_assert!((frac - 0.5).abs() <= 1.0 / idx.len() as f64 + 1e-9, "{s:?} class-1 fraction {frac}");
            }
        }
        prop_assert_eq!(all.len(), count);
        prop_assert_eq!(ds.indices(Split::Unseen).is_empty(), !seen_unseen);
    }

    #[test]
    fn permutation_preserves_isomorphism(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let g = gen_ba2motifs(2, seed).unwrap().graphs[1].clone();
        let mut perm: Vec<usize> = (0..g.num_nodes).collect();
        perm.shuffle(&mut genexp::rng_from_seed(seed));
        prop_assert!(is_isomorphic(&g, &g.permuted(&perm)));
    }
}
