use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::{rng_from_seed, Error, Result};

/// How to partition a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitPlan {
    Standard { train: f64, val: f64, test: f64 },
    /// Holds out `unseen` first, then splits the rest train/val/test.
    SeenUnseen { unseen: f64, train: f64, val: f64, test: f64 },
}

impl SplitPlan {
    pub const STANDARD: SplitPlan = SplitPlan::Standard {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };

    pub const SEEN_UNSEEN: SplitPlan = SplitPlan::SeenUnseen {
        unseen: 0.1,
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::domain(format!("split ratios out of [0,1]: {ratios:?}")));
    }
    let s: f64 = ratios.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("split ratios sum to {s}, not 1")));
    }
    Ok(())
}

/// Stratified assignment of `items` into parts with the given ratios.
///
/// Each class is shuffled, its members get evenly spaced quantile keys, and
/// the merged key order is cut at the global part boundaries. Global part
/// sizes are exact (rounded) and every class is spread proportionally.
fn stratified(items: &[(usize, usize)], ratios: &[f64], rng: &mut crate::Rng) -> Result<Vec<Vec<usize>>> {
    let parts = ratios.iter().filter(|&&r| r > 0.0).count();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(idx, class) in items {
        by_class.entry(class).or_default().push(idx);
    }
    let mut keyed = Vec::with_capacity(items.len());
    for (class, members) in &mut by_class {
        if members.len() < parts {
            return Err(Error::domain(format!(
                "class {class} has {} instances, fewer than the {parts} splits",
                members.len()
            )));
        }
        members.shuffle(rng);
        let n = members.len() as f64;
        for (rank, &idx) in members.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, *class, idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = keyed.len();
    let mut out = vec![Vec::new(); ratios.len()];
    let mut cum = 0.0;
    let mut start = 0;
    for (p, r) in ratios.iter().enumerate() {
        cum += r;
        let end = if p + 1 == ratios.len() { n } else { (cum * n as f64).round() as usize };
        out[p] = keyed[start..end.max(start)].iter().map(|k| k.2).collect();
        start = end.max(start);
    }
    Ok(out)
}

/// Returns a copy of `dataset` with every index assigned to a split.
pub fn split(dataset: &Dataset, plan: SplitPlan, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let items: Vec<(usize, usize)> = dataset
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| (i, g.label.unwrap_or(usize::MAX)))
        .collect();
    let mut assignment = vec![None; dataset.len()];
    let seen: Vec<(usize, usize)> = match plan {
        SplitPlan::Standard { .. } => items,
        SplitPlan::SeenUnseen { unseen, .. } => {
            check_ratios(&[1.0 - unseen, unseen])?;
            let parts = stratified(&items, &[1.0 - unseen, unseen], &mut rng)?;
            for &i in &parts[1] {
                assignment[i] = Some(Split::Unseen);
            }
            let mut seen = parts[0].clone();
            seen.sort_unstable();
            seen.into_iter().map(|i| items[i]).collect()
        }
    };
    let (train, val, test) = match plan {
        SplitPlan::Standard { train, val, test } | SplitPlan::SeenUnseen { train, val, test, .. } => (train, val, test),
    };
    check_ratios(&[train, val, test])?;
    let parts = stratified(&seen, &[train, val, test], &mut rng)?;
    for (part, kind) in parts.iter().zip([Split::Train, Split::Val, Split::Test]) {
        for &i in part {
            assignment[i] = Some(kind);
        }
    }
    let mut out = dataset.clone();
    out.split = assignment;
    Ok(out)
}
