use std::collections::BTreeSet;

use crate::explainers::ExplanationMask;
use crate::graphdata::{Graph, MotifAnnotation};

/// Per-instance Jaccard and corpus AUC against motif annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthAgreement {
    /// `None` where the annotation is missing.
    pub jaccard: Vec<Option<f64>>,
    /// Soft weights against edge labels, pooled over annotated graphs.
    pub auc: Option<f64>,
    pub missing: usize,
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Probability that a positive outscores a negative, ties counting half.
/// `None` unless both classes are present.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average of 1-based ranks i+1 ..= j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

pub fn ground_truth_agreement(graphs: &[&Graph], masks: &[&ExplanationMask], annotations: &[Option<MotifAnnotation>]) -> GroundTruthAgreement {
    let mut jac = Vec::with_capacity(graphs.len());
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut missing = 0;
    for ((g, m), a) in graphs.iter().zip(masks).zip(annotations) {
        match a {
            Some(a) => {
                jac.push(Some(jaccard(&m.hard_edge_ids(), &a.edge_ids(g))));
                scores.extend_from_slice(&m.edge_weights);
                labels.extend(a.edge_labels(g));
            }
            None => {
                missing += 1;
                jac.push(None);
            }
        }
    }
    GroundTruthAgreement {
        jaccard: jac,
        auc: mann_whitney_auc(&scores, &labels),
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jaccard_extremes() {
        assert_eq!(jaccard(&[1, 2, 3], &[3, 2, 1]), 1.0);
        assert_eq!(jaccard(&[1, 2], &[3]), 0.0);
        assert_eq!(jaccard(&[1, 2], &[2, 3]), 1.0 / 3.0);
    }

    #[test]
    fn auc_small_cases() {
        assert_eq!(mann_whitney_auc(&[0.1, 0.9], &[false, true]), Some(1.0));
        assert_eq!(mann_whitney_auc(&[0.9, 0.1], &[false, true]), Some(0.0));
        assert_eq!(mann_whitney_auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(mann_whitney_auc(&[0.5], &[true]), None);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(data in proptest::collection::vec((0u8..5, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..data.len() {
                for j in 0..data.len() {
                    if labels[i] && !labels[j] {
                        pairs += 1.0;
                        wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            let auc = mann_whitney_auc(&scores, &labels);
            if pairs == 0.0 {
                prop_assert!(auc.is_none());
            } else {
                prop_assert!((auc.unwrap() - wins / pairs).abs() < 1e-12);
            }
        }
    }
}
