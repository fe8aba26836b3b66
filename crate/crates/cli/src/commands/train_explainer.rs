use genexp::constraints::InfoConstraint;
use genexp::explainers::{model_level_vote, train_explainer, Family};

use super::Ctx;
use crate::artifacts::{load_dataset, load_model, save_explainer, ExplainerSidecar};
use crate::error::{usage, CliError, CliResult};
use crate::fsutil::{with_suffix, write_json};
use crate::TrainExplainerArgs;

pub fn run(mut ctx: Ctx, args: TrainExplainerArgs) -> CliResult<()> {
    let data = ctx.data_path(args.data.as_deref())?;
    let loaded = load_dataset(&data)?;
    let model_path = ctx.root.path(&args.model);
    let model = load_model(&model_path)?;

    let family = args
        .family
        .or(ctx.config.explainers.first().map(|e| e.family))
        .ok_or_else(|| usage("no explainer family given (use --family)"))?;
    let mut cfg = ctx.config.explainer(family);
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if args.prior.is_some() || args.weight.is_some() {
        let (p0, w0) = match cfg.constraint {
            InfoConstraint::Variational { prior, weight } => (prior, weight),
            _ => (0.3, 1.0),
        };
        cfg.constraint = InfoConstraint::Variational {
            prior: args.prior.unwrap_or(p0),
            weight: args.weight.unwrap_or(w0),
        };
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    }
    if let Some(v) = args.target_class {
        cfg.target_class = v;
    }
    if let Some(v) = args.seed.or(ctx.config.seed) {
        cfg.seed = v;
    }
    cfg.validate()?;
    ctx.config.explainers = vec![cfg.clone()];
    ctx.config.dataset.path = Some(data.clone());

    let te = train_explainer(&model.model, &loaded.dataset, &cfg)?;
    if let Some(bad) = te.history.iter().find(|r| !r.total.is_finite()) {
        return Err(CliError::Numerical(format!("explainer loss became {} at epoch {}", bad.total, bad.epoch)));
    }

    let out = ctx.out_path(args.out.as_deref(), &format!("{family}.ckpt"));
    ctx.snapshot(&out)?;
    if family == Family::ModelLevel {
        let ml = model_level_vote(&te, &model.model, &loaded.dataset)?;
        println!(
            "model-level    class {} subgraph with {} nodes, {} edges; support {}/{}; predicted {}",
            ml.class,
            ml.graph.num_nodes,
            ml.graph.num_edges(),
            ml.support,
            ml.instances,
            ml.predicted_label
        );
        write_json(&with_suffix(&out, ".model_level.json"), &ml)?;
    }
    let sidecar = ExplainerSidecar {
        explainer_config: cfg,
        dataset: loaded.dataset.name.clone(),
        dataset_sha256: loaded.sha256,
        model_sha256: model.sha256,
        history: te.history.clone(),
    };
    save_explainer(&out, &te, &sidecar)?;

    if let Some(last) = te.history.last() {
        println!("final loss     {:.6} (attribution {:.6}, constraint {:.6})", last.total, last.attr, last.info);
    }
    println!("family         {family}");
    println!(
        "base model     {} layers of {:?}, test accuracy {:.4} on {}",
        model.sidecar.gnn_config.num_layers, model.sidecar.gnn_config.layer_kind, model.sidecar.test_accuracy, model.sidecar.dataset
    );
    println!("wrote {}", out.display());
    Ok(())
}
