use genexp::gnn::{accuracy, train_base};
use genexp::Split;

use super::Ctx;
use crate::artifacts::{load_dataset, save_model, ModelSidecar};
use crate::error::{usage, CliError, CliResult};
use crate::fsutil::{atomic_write, with_suffix};
use crate::TrainGnnArgs;

pub fn run(mut ctx: Ctx, args: TrainGnnArgs) -> CliResult<()> {
    let data = ctx.data_path(args.data.as_deref())?;
    let loaded = load_dataset(&data)?;
    let ds = &loaded.dataset;
    if !ds.has_split() {
        return Err(usage(format!("dataset {} has no train/val/test split", data.display())));
    }
    let seed = ctx.seed(args.seed)?;

    let cfg = &mut ctx.config.gnn;
    if let Some(v) = args.layer {
        cfg.layer_kind = v;
    }
    if let Some(v) = args.layers {
        cfg.num_layers = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden_dim = v;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    cfg.num_classes = ds.num_classes;
    if let Some(g) = ds.graphs.first() {
        cfg.node_dim = g.node_dim();
        cfg.edge_dim = g.edge_dim();
    }
    let cfg = cfg.clone();
    ctx.config.seed = Some(seed);
    ctx.config.dataset.path = Some(data.clone());

    let trained = train_base(ds, &cfg, seed)?;
    if let Some(bad) = trained.history.iter().find(|r| !r.train_loss.is_finite()) {
        return Err(CliError::Numerical(format!("training loss became {} at epoch {}", bad.train_loss, bad.epoch)));
    }
    let test_accuracy = accuracy(&trained.model, ds, Split::Test)?;

    let out = ctx.out_path(args.out.as_deref(), "model.ckpt");
    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in &trained.history {
        csv.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let csv = csv.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    atomic_write(&with_suffix(&out, ".history.csv"), &csv)?;
    ctx.snapshot(&out)?;
    let sidecar = ModelSidecar {
        gnn_config: cfg,
        dataset: ds.name.clone(),
        dataset_sha256: loaded.sha256.clone(),
        seed,
        best_epoch: trained.best_epoch,
        test_accuracy,
    };
    save_model(&out, &trained.model, &sidecar)?;

    println!("epochs run     {}", trained.history.len());
    println!("best epoch     {}", trained.best_epoch);
    println!("test accuracy  {test_accuracy:.4}");
    println!("wrote {}", out.display());
    Ok(())
}
