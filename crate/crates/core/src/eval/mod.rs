//! Fidelity, sparsity filtering, timing, generalization, ground-truth
//! agreement and a brute-force oracle for small graphs.

mod agreement;
mod oracle;
mod timing;

pub use agreement::{ground_truth_agreement, jaccard, mann_whitney_auc, GroundTruthAgreement};
pub use oracle::{brute_force_best_subgraph, hard_mask_probability, OracleResult, ORACLE_MAX_EDGES};
pub use timing::{time_calls, time_inference, TimingStats};

use serde::{Deserialize, Serialize};

use crate::explainers::{ExplanationMask, TrainedExplainer};
use crate::gnn::GnnModel;
use crate::graphdata::{Dataset, Graph, Split};
use crate::{Error, Result};

/// Explanations with this many hard edges or more are dropped from aggregates.
pub const DEFAULT_MAX_EDGES: usize = 20;

/// Outcome for one explained graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub graph_index: usize,
    pub seed: u64,
    /// The model is right on the full graph.
    pub initial_correct: bool,
    /// The model is right on the hard explanation subgraph.
    pub explanation_correct: bool,
    pub num_hard_edges: usize,
    pub gt_jaccard: Option<f64>,
    pub wall_time_ms: f64,
}

/// Mean of `|1(initial) − 1(explained)|`.
pub fn fidelity_from_indicators(pairs: impl IntoIterator<Item = (bool, bool)>) -> Result<f64> {
    let mut n = 0usize;
    let mut diff = 0usize;
    for (a, b) in pairs {
        n += 1;
        diff += usize::from(a != b);
    }
    if n == 0 {
        return Err(Error::domain("fidelity over an empty instance list"));
    }
    Ok(diff as f64 / n as f64)
}

fn label_of(graph: &Graph) -> Result<usize> {
    graph.label.ok_or_else(|| Error::domain("fidelity needs labeled graphs"))
}

/// Fidelity-acc of hard explanations against the dataset labels.
pub fn fidelity_acc(model: &GnnModel, graphs: &[&Graph], explanations: &[Vec<bool>]) -> Result<f64> {
    if graphs.len() != explanations.len() {
        return Err(Error::domain(format!("{} graphs but {} explanations", graphs.len(), explanations.len())));
    }
    let mut pairs = Vec::with_capacity(graphs.len());
    for (g, hard) in graphs.iter().zip(explanations) {
        if hard.len() != g.num_edges() {
            return Err(Error::domain(format!("mask has {} entries for {} edges", hard.len(), g.num_edges())));
        }
        let y = label_of(g)?;
        let w: Vec<f64> = hard.iter().map(|&b| f64::from(u8::from(b))).collect();
        let before = model.predict(g, None)?.label == y;
        let after = model.predict(g, Some(&w))?.label == y;
        pairs.push((before, after));
    }
    fidelity_from_indicators(pairs)
}

/// Keeps records with fewer than `max_edges` hard edges; also returns the
/// kept fraction (1 for an empty input).
pub fn sparsity_filter(records: &[EvalRecord], max_edges: usize) -> (Vec<EvalRecord>, f64) {
    let kept: Vec<EvalRecord> = records.iter().filter(|r| r.num_hard_edges < max_edges).cloned().collect();
    let frac = if records.is_empty() { 1.0 } else { kept.len() as f64 / records.len() as f64 };
    (kept, frac)
}

/// Aggregated evaluation of one explainer family on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub family: String,
    pub dataset: String,
    pub k: usize,
    pub max_edges: usize,
    pub seeds: Vec<u64>,
    pub records: Vec<EvalRecord>,
    pub kept_fraction: f64,
    pub fidelity_acc: f64,
    pub faithfulness: f64,
    pub mean_inference_ms: f64,
    /// Corpus AUC of soft weights against motif edges.
    pub gt_auc: Option<f64>,
    pub annotations_missing: usize,
    /// Seen-test faithfulness minus unseen faithfulness, averaged over
    /// `generalization_gaps`.
    pub generalization_discrepancy: Option<f64>,
    /// One gap per seed.
    #[serde(default)]
    pub generalization_gaps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Aggregates {
    kept_fraction: f64,
    fidelity_acc: f64,
    faithfulness: f64,
    mean_inference_ms: f64,
}

fn aggregate(records: &[EvalRecord], max_edges: usize) -> Result<Aggregates> {
    let (kept, kept_fraction) = sparsity_filter(records, max_edges);
    let fidelity_acc = fidelity_from_indicators(kept.iter().map(|r| (r.initial_correct, r.explanation_correct)))?;
    let mean_inference_ms = records.iter().map(|r| r.wall_time_ms).sum::<f64>() / records.len() as f64;
    Ok(Aggregates {
        kept_fraction,
        fidelity_acc,
        faithfulness: 1.0 - fidelity_acc,
        mean_inference_ms,
    })
}

impl EvalReport {
    /// Builds a report whose aggregates are computed from `records`.
    pub fn from_records(
        family: impl Into<String>,
        dataset: impl Into<String>,
        k: usize,
        max_edges: usize,
        records: Vec<EvalRecord>,
    ) -> Result<Self> {
        let a = aggregate(&records, max_edges)?;
        let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        Ok(Self {
            family: family.into(),
            dataset: dataset.into(),
            k,
            max_edges,
            seeds,
            records,
            kept_fraction: a.kept_fraction,
            fidelity_acc: a.fidelity_acc,
            faithfulness: a.faithfulness,
            mean_inference_ms: a.mean_inference_ms,
            gt_auc: None,
            annotations_missing: 0,
            generalization_discrepancy: None,
            generalization_gaps: Vec::new(),
        })
    }

    /// Recomputes the aggregates from the records and checks they match the
    /// stored values exactly.
    pub fn verify(&self) -> Result<()> {
        let a = aggregate(&self.records, self.max_edges)?;
        let stored = Aggregates {
            kept_fraction: self.kept_fraction,
            fidelity_acc: self.fidelity_acc,
            faithfulness: self.faithfulness,
            mean_inference_ms: self.mean_inference_ms,
        };
        if a != stored {
            return Err(Error::Integrity(format!("report aggregates {stored:?} differ from records {a:?}")));
        }
        if self.faithfulness != 1.0 - self.fidelity_acc {
            return Err(Error::Integrity("faithfulness is not 1 - fidelity_acc".into()));
        }
        Ok(())
    }

    /// Concatenates reports of the same family and dataset, e.g. one per seed.
    pub fn merge(reports: &[EvalReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::domain("nothing to merge"))?;
        if let Some(r) = reports
            .iter()
            .find(|r| r.family != first.family || r.dataset != first.dataset || r.k != first.k || r.max_edges != first.max_edges)
        {
            return Err(Error::domain(format!(
                "cannot merge {}/{} with {}/{}",
                first.family, first.dataset, r.family, r.dataset
            )));
        }
        let records = reports.iter().flat_map(|r| r.records.iter().cloned()).collect();
        let mut out = Self::from_records(first.family.clone(), first.dataset.clone(), first.k, first.max_edges, records)?;
        let aucs: Vec<f64> = reports.iter().filter_map(|r| r.gt_auc).collect();
        out.gt_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
        out.annotations_missing = reports.iter().map(|r| r.annotations_missing).sum();
        let gaps: Vec<f64> = reports.iter().flat_map(|r| r.generalization_gaps.iter().copied()).collect();
        out.set_generalization_gaps(gaps);
        Ok(out)
    }

    /// Stores per-seed gaps and their mean.
    pub fn set_generalization_gaps(&mut self, gaps: Vec<f64>) {
        self.generalization_discrepancy = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
        self.generalization_gaps = gaps;
    }
}

/// Evaluation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub k: usize,
    pub max_edges: usize,
    /// Threads for metric computation; explanation itself runs sequentially
    /// so that per-record wall times are uncontended.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 6,
            max_edges: DEFAULT_MAX_EDGES,
            workers: 1,
        }
    }
}

/// Explains each graph, timing every call.
pub fn explain_timed(te: &TrainedExplainer, model: &GnnModel, graphs: &[&Graph], k: usize) -> Result<Vec<(ExplanationMask, f64)>> {
    graphs
        .iter()
        .map(|g| {
            let t = std::time::Instant::now();
            let m = te.explain(model, g, k)?;
            Ok((m, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect()
}

fn correctness(model: &GnnModel, graph: &Graph, mask: &ExplanationMask) -> Result<(bool, bool)> {
    let y = label_of(graph)?;
    let before = model.predict(graph, None)?.label == y;
    let after = model.predict(graph, Some(&mask.hard_weights()))?.label == y;
    Ok((before, after))
}

fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = workers.max(1);
    if workers == 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>>>())).collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("metric worker panicked")?);
        }
        Ok(out)
    })
}

/// One stored explanation: graph index, mask and the time it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Explained {
    pub graph_index: usize,
    pub mask: ExplanationMask,
    pub wall_time_ms: f64,
}

/// Evaluates `te` on the graphs at `indices` of `dataset`.
pub fn evaluate(te: &TrainedExplainer, model: &GnnModel, dataset: &Dataset, indices: &[usize], opts: &EvalOptions) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::domain("no graphs to evaluate"));
    }
    let graphs: Vec<&Graph> = indices.iter().map(|&i| &dataset.graphs[i]).collect();
    let explained: Vec<Explained> = explain_timed(te, model, &graphs, opts.k)?
        .into_iter()
        .zip(indices)
        .map(|((mask, wall_time_ms), &graph_index)| Explained {
            graph_index,
            mask,
            wall_time_ms,
        })
        .collect();
    evaluate_explained(model, dataset, te.family().as_str(), te.config.seed, &explained, opts)
}

/// Scores explanations produced earlier, e.g. read back from disk.
pub fn evaluate_explained(
    model: &GnnModel,
    dataset: &Dataset,
    family: &str,
    seed: u64,
    explained: &[Explained],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if explained.is_empty() {
        return Err(Error::domain("no graphs to evaluate"));
    }
    let mut graphs = Vec::with_capacity(explained.len());
    for e in explained {
        let g = dataset
            .graphs
            .get(e.graph_index)
            .ok_or_else(|| Error::domain(format!("graph index {} out of {}", e.graph_index, dataset.len())))?;
        if e.mask.edge_weights.len() != g.num_edges() {
            return Err(Error::domain(format!(
                "explanation of graph {} has {} weights for {} edges",
                e.graph_index,
                e.mask.edge_weights.len(),
                g.num_edges()
            )));
        }
        graphs.push(g);
    }
    let jobs: Vec<(&Graph, &ExplanationMask)> = graphs.iter().zip(explained).map(|(g, e)| (*g, &e.mask)).collect();
    let outcomes = parallel_map(&jobs, opts.workers, |&(g, m)| correctness(model, g, m))?;

    let annotations: Vec<_> = explained.iter().map(|e| dataset.annotations.get(e.graph_index).cloned().flatten()).collect();
    let masks: Vec<&ExplanationMask> = explained.iter().map(|e| &e.mask).collect();
    let gt = ground_truth_agreement(&graphs, &masks, &annotations);

    let records = explained
        .iter()
        .zip(outcomes)
        .zip(&gt.jaccard)
        .map(|((e, (before, after)), j)| EvalRecord {
            graph_index: e.graph_index,
            seed,
            initial_correct: before,
            explanation_correct: after,
            num_hard_edges: e.mask.hard_edge_ids().len(),
            gt_jaccard: *j,
            wall_time_ms: e.wall_time_ms,
        })
        .collect();
    let mut report = EvalReport::from_records(family, dataset.name.clone(), opts.k, opts.max_edges, records)?;
    report.gt_auc = gt.auc;
    report.annotations_missing = gt.missing;
    Ok(report)
}

/// Faithfulness of `te` on a list of graphs.
pub fn faithfulness_on(te: &TrainedExplainer, model: &GnnModel, graphs: &[&Graph], k: usize) -> Result<f64> {
    let pairs = graphs
        .iter()
        .map(|g| correctness(model, g, &te.explain(model, g, k)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(1.0 - fidelity_from_indicators(pairs)?)
}

/// Faithfulness on seen test graphs minus faithfulness on unseen graphs.
pub fn generalization_gap(te: &TrainedExplainer, model: &GnnModel, seen_test: &[&Graph], unseen: &[&Graph], k: usize) -> Result<f64> {
    if unseen.is_empty() {
        return Err(Error::domain("empty unseen split"));
    }
    Ok(faithfulness_on(te, model, seen_test, k)? - faithfulness_on(te, model, unseen, k)?)
}

/// [`generalization_gap`] on the test and unseen splits of `dataset`.
pub fn generalization_gap_split(te: &TrainedExplainer, model: &GnnModel, dataset: &Dataset, k: usize) -> Result<f64> {
    let pick = |s| dataset.indices(s).into_iter().map(|i| &dataset.graphs[i]).collect::<Vec<_>>();
    generalization_gap(te, model, &pick(Split::Test), &pick(Split::Unseen), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, a: bool, b: bool, edges: usize) -> EvalRecord {
        EvalRecord {
            graph_index: i,
            seed: 0,
            initial_correct: a,
            explanation_correct: b,
            num_hard_edges: edges,
            gt_jaccard: None,
            wall_time_ms: 1.0,
        }
    }

    #[test]
    fn worked_fidelity_example() {
        let f = fidelity_from_indicators([(true, true), (true, true), (true, true), (true, false)]).unwrap();
        assert_eq!(f, 0.25);
        assert!(fidelity_from_indicators(Vec::new()).is_err());
    }

    #[test]
    fn filter_is_strict() {
        let rs = vec![rec(0, true, true, 6), rec(1, true, true, 20), rec(2, true, false, 19)];
        let (kept, frac) = sparsity_filter(&rs, 20);
        assert_eq!(kept.iter().map(|r| r.graph_index).collect::<Vec<_>>(), vec![0, 2]);
        assert!((frac - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_round_trip_verifies() {
        let rs = vec![rec(0, true, true, 6), rec(1, true, false, 6), rec(2, false, false, 6), rec(3, true, true, 25)];
        let r = EvalReport::from_records("maskgen", "d", 6, 20, rs).unwrap();
        assert_eq!(r.fidelity_acc + r.faithfulness, 1.0);
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        back.verify().unwrap();
        let mut bad = back.clone();
        bad.faithfulness = 0.5;
        assert!(matches!(bad.verify(), Err(Error::Integrity(_))));
    }

    #[test]
    fn merge_rejects_other_dataset() {
        let a = EvalReport::from_records("maskgen", "x", 6, 20, vec![rec(0, true, true, 6)]).unwrap();
        let b = EvalReport::from_records("maskgen", "y", 6, 20, vec![rec(0, true, true, 6)]).unwrap();
        assert!(EvalReport::merge(&[a.clone(), b]).is_err());
        let m = EvalReport::merge(&[a.clone(), a]).unwrap();
        assert_eq!(m.records.len(), 2);
        m.verify().unwrap();
    }
}
