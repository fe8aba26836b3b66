use genexp::eval::{
    brute_force_best_subgraph, evaluate_explained, generalization_gap_split, hard_mask_probability, EvalOptions, EvalReport,
    Explained, ORACLE_MAX_EDGES,
};
use genexp::GnnModel;
use serde::Serialize;

use super::Ctx;
use crate::artifacts::{check_hash, list_explanations, load_dataset, load_explainer, load_model, ExplanationFile, ExplanationManifest, MANIFEST};
use crate::error::{usage, CliError, CliResult};
use crate::fsutil::{atomic_write, read_json, with_suffix, write_json};
use crate::EvaluateArgs;

#[derive(Serialize)]
struct CsvRow<'a> {
    graph_index: usize,
    family: &'a str,
    dataset: &'a str,
    seed: u64,
    initial_correct: bool,
    explanation_correct: bool,
    num_hard_edges: usize,
    gt_jaccard: Option<f64>,
    wall_time_ms: f64,
}

#[derive(Serialize)]
struct OracleInstance {
    graph_index: usize,
    target: usize,
    explainer_probability: f64,
    oracle_probability: f64,
    oracle_edges: Vec<[usize; 2]>,
}

#[derive(Serialize)]
struct OracleSummary {
    k: usize,
    checked: usize,
    /// Graphs above the oracle's edge cap.
    skipped: usize,
    /// Instances where the explainer beat the exhaustive optimum.
    violations: usize,
    /// Instances within 0.05 of the optimum.
    near_optimal: usize,
    instances: Vec<OracleInstance>,
}

fn csv_bytes(report: &EvalReport) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.records {
        w.serialize(CsvRow {
            graph_index: r.graph_index,
            family: &report.family,
            dataset: &report.dataset,
            seed: r.seed,
            initial_correct: r.initial_correct,
            explanation_correct: r.explanation_correct,
            num_hard_edges: r.num_hard_edges,
            gt_jaccard: r.gt_jaccard,
            wall_time_ms: r.wall_time_ms,
        })
        .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn oracle_check(model: &GnnModel, ds: &genexp::Dataset, explained: &[Explained], k: usize) -> CliResult<OracleSummary> {
    let mut out = OracleSummary {
        k,
        checked: 0,
        skipped: 0,
        violations: 0,
        near_optimal: 0,
        instances: Vec::new(),
    };
    for e in explained {
        let g = &ds.graphs[e.graph_index];
        if g.num_edges() > ORACLE_MAX_EDGES {
            out.skipped += 1;
            continue;
        }
        let target = model.predict(g, None)?.label;
        let hard = e.mask.hard_edges.clone().unwrap_or_else(|| vec![true; g.num_edges()]);
        let p = hard_mask_probability(model, g, &hard, target)?;
        let best = brute_force_best_subgraph(model, g, k, target, false)?;
        out.checked += 1;
        out.violations += usize::from(p > best.probability);
        out.near_optimal += usize::from(best.probability - p <= 0.05);
        out.instances.push(OracleInstance {
            graph_index: e.graph_index,
            target,
            explainer_probability: p,
            oracle_probability: best.probability,
            oracle_edges: best.edges.iter().map(|&i| [g.edges[i].0, g.edges[i].1]).collect(),
        });
    }
    Ok(out)
}

pub fn run(mut ctx: Ctx, args: EvaluateArgs) -> CliResult<()> {
    let dir = ctx.root.path(&args.explanations);
    if !dir.is_dir() {
        return Err(usage(format!("explanation directory {} does not exist", dir.display())));
    }
    let files = list_explanations(&dir)?;
    if files.is_empty() {
        return Err(usage(format!("no explanation files in {}", dir.display())));
    }
    let manifest: ExplanationManifest = read_json(&dir.join(MANIFEST))?;

    let data = ctx.data_path(args.data.as_deref())?;
    let loaded = load_dataset(&data)?;
    let model_path = ctx.root.path(&args.model);
    let model = load_model(&model_path)?;
    check_hash("model", &model_path, &manifest.model_sha256, &model.sha256)?;
    check_hash("dataset", &data, &manifest.dataset_sha256, &loaded.sha256)?;
    let ds = &loaded.dataset;

    let mut explained = Vec::with_capacity(files.len());
    for f in &files {
        let file: ExplanationFile = read_json(f)?;
        let g = ds
            .graphs
            .get(file.graph_index)
            .ok_or_else(|| usage(format!("{} refers to graph {} of {}", f.display(), file.graph_index, ds.len())))?;
        explained.push(Explained {
            graph_index: file.graph_index,
            mask: file.mask(g)?,
            wall_time_ms: file.wall_time_ms,
        });
    }

    let opts = EvalOptions {
        k: manifest.k,
        max_edges: args.max_edges.unwrap_or(ctx.config.eval.max_edges),
        workers: args.workers.unwrap_or(ctx.config.eval.workers).max(1),
    };
    ctx.config.eval.k = opts.k;
    ctx.config.eval.max_edges = opts.max_edges;
    ctx.config.eval.workers = opts.workers;
    ctx.config.dataset.path = Some(data.clone());
    let mut report = evaluate_explained(&model.model, ds, manifest.family.as_str(), manifest.seed, &explained, &opts)?;

    if args.generalization {
        let path = ctx.root.path(args.explainer.as_deref().expect("clap enforces --explainer"));
        let ex = load_explainer(&path)?;
        check_hash("model", &model_path, &ex.sidecar.model_sha256, &model.sha256)?;
        check_hash("dataset", &data, &ex.sidecar.dataset_sha256, &loaded.sha256)?;
        let gap = generalization_gap_split(&ex.explainer, &model.model, ds, opts.k)
            .map_err(|e| usage(format!("generalization needs seen-unseen splits: {e}")))?;
        report.set_generalization_gaps(vec![gap]);
    }

    let prefix = match &args.out {
        Some(p) => ctx.root.path(p),
        None => dir.join("report"),
    };
    if args.oracle {
        let summary = oracle_check(&model.model, ds, &explained, opts.k)?;
        println!(
            "oracle         {} checked, {} above the edge cap, {} dominance violations, {} within 0.05",
            summary.checked, summary.skipped, summary.violations, summary.near_optimal
        );
        write_json(&with_suffix(&prefix, ".oracle.json"), &summary)?;
    }
    atomic_write(&with_suffix(&prefix, ".csv"), &csv_bytes(&report)?)?;
    write_json(&with_suffix(&prefix, ".json"), &report)?;
    ctx.snapshot(&prefix)?;

    println!("family         {}", report.family);
    println!("graphs         {} ({:.2} within the sparsity filter)", report.records.len(), report.kept_fraction);
    println!("faithfulness   {:.4}", report.faithfulness);
    println!("fidelity-acc   {:.4}", report.fidelity_acc);
    match report.gt_auc {
        Some(a) => println!("gt AUC         {a:.4}"),
        None => println!("gt AUC         n/a"),
    }
    println!("mean time      {:.3} ms", report.mean_inference_ms);
    if let Some(g) = report.generalization_discrepancy {
        println!("gen. gap       {g:.4}");
    }
    println!("wrote {}", with_suffix(&prefix, ".json").display());
    Ok(())
}
