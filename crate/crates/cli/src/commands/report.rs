use std::collections::BTreeMap;
use std::fmt::Write;

use genexp::eval::EvalReport;

use super::Ctx;
use crate::artifacts::load_report;
use crate::error::{usage, CliResult};
use crate::fsutil::atomic_write;
use crate::svg::{Bar, BarChart, Scale};
use crate::ReportArgs;

fn stderr(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((var / n).sqrt())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.digits$}"))
}

pub fn summary_table(dataset: &str, reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {dataset}");
    let _ = writeln!(
        s,
        "{:<16}{:>7}{:>14}{:>14}{:>9}{:>11}{:>7}{:>18}",
        "family", "seeds", "faithfulness", "fidelity_acc", "gt_auc", "mean_ms", "kept", "gen_gap"
    );
    for r in reports {
        let gap = match (r.generalization_discrepancy, stderr(&r.generalization_gaps)) {
            (Some(g), Some(e)) => format!("{g:.4} ± {e:.4}"),
            (Some(g), None) => format!("{g:.4}"),
            _ => "n/a".into(),
        };
        let _ = writeln!(
            s,
            "{:<16}{:>7}{:>14.4}{:>14.4}{:>9}{:>11.3}{:>7.2}{:>18}",
            r.family,
            r.seeds.len(),
            r.faithfulness,
            r.fidelity_acc,
            opt(r.gt_auc, 4),
            r.mean_inference_ms,
            r.kept_fraction,
            gap
        );
    }
    s
}

pub fn run(mut ctx: Ctx, args: ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for p in &args.reports {
        reports.push(load_report(&ctx.root.path(p))?);
    }
    let dataset = reports[0].dataset.clone();
    if let Some(other) = reports.iter().find(|r| r.dataset != dataset) {
        return Err(usage(format!(
            "cannot merge reports on different datasets: {dataset:?} and {:?}",
            other.dataset
        )));
    }
    let mut by_family: BTreeMap<String, Vec<EvalReport>> = BTreeMap::new();
    for r in reports {
        by_family.entry(r.family.clone()).or_default().push(r);
    }
    let merged = by_family
        .values()
        .map(|rs| EvalReport::merge(rs).map_err(|e| usage(format!("cannot merge reports: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;

    let faithfulness = BarChart {
        title: format!("Faithfulness on {dataset}"),
        y_label: "faithfulness".into(),
        scale: Scale::Linear,
        bars: merged
            .iter()
            .map(|r| Bar {
                label: r.family.clone(),
                value: r.faithfulness,
                err: None,
            })
            .collect(),
    };
    let timing = BarChart {
        title: format!("Inference time on {dataset}"),
        y_label: "ms per graph (log scale)".into(),
        scale: Scale::Log,
        bars: merged
            .iter()
            .map(|r| Bar {
                label: r.family.clone(),
                value: r.mean_inference_ms,
                err: None,
            })
            .collect(),
    };
    let generalization = BarChart {
        title: format!("Seen minus unseen faithfulness on {dataset}"),
        y_label: "faithfulness gap".into(),
        scale: Scale::Linear,
        bars: merged
            .iter()
            .filter_map(|r| {
                r.generalization_discrepancy.map(|g| Bar {
                    label: r.family.clone(),
                    value: g,
                    err: stderr(&r.generalization_gaps),
                })
            })
            .collect(),
    };

    let dir = ctx.out_path(args.out.as_deref(), "report");
    atomic_write(&dir.join("faithfulness.svg"), faithfulness.render().as_bytes())?;
    atomic_write(&dir.join("timing.svg"), timing.render().as_bytes())?;
    atomic_write(&dir.join("generalization.svg"), generalization.render().as_bytes())?;
    let table = summary_table(&dataset, &merged);
    atomic_write(&dir.join("summary.txt"), table.as_bytes())?;
    ctx.config.eval.k = merged[0].k;
    ctx.config.eval.max_edges = merged[0].max_edges;
    ctx.config.snapshot(&dir.join("config.toml"))?;

    print!("{table}");
    println!("wrote {}", dir.display());
    Ok(())
}
