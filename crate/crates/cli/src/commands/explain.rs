use std::time::Instant;

use super::Ctx;
use crate::artifacts::{
    check_hash, explanation_file_name, list_explanations, load_dataset, load_explainer, load_model, ExplanationFile,
    ExplanationManifest, MANIFEST,
};
use crate::error::{usage, CliResult};
use crate::fsutil::write_json;
use crate::ExplainArgs;

pub fn run(mut ctx: Ctx, args: ExplainArgs) -> CliResult<()> {
    let data = ctx.data_path(args.data.as_deref())?;
    let loaded = load_dataset(&data)?;
    let model_path = ctx.root.path(&args.model);
    let model = load_model(&model_path)?;
    let explainer_path = ctx.root.path(&args.explainer);
    let ex = load_explainer(&explainer_path)?;
    check_hash("model", &model_path, &ex.sidecar.model_sha256, &model.sha256)?;
    check_hash("dataset", &data, &ex.sidecar.dataset_sha256, &loaded.sha256)?;

    let k = args.k.unwrap_or(ctx.config.eval.k);
    if k < 1 {
        return Err(usage("--k must be >= 1"));
    }
    ctx.config.eval.k = k;
    ctx.config.dataset.path = Some(data.clone());
    ctx.config.explainers = vec![ex.explainer.config.clone()];

    let ds = &loaded.dataset;
    let indices: Vec<usize> = if args.all {
        (0..ds.len()).collect()
    } else {
        let split = args.split.unwrap_or(genexp::Split::Test);
        let idx = ds.indices(split);
        if idx.is_empty() {
            return Err(usage(format!("dataset {} has no {} graphs", data.display(), split.as_str())));
        }
        idx
    };

    let dir = ctx.root.path(&args.out);
    std::fs::create_dir_all(&dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    // Stale files from an earlier run would be picked up by `evaluate`.
    for old in list_explanations(&dir)? {
        std::fs::remove_file(&old).map_err(|e| usage(format!("cannot remove {}: {e}", old.display())))?;
    }
    let te = &ex.explainer;
    let mut total_ms = 0.0;
    for &i in &indices {
        let g = &ds.graphs[i];
        let t = Instant::now();
        let mask = te.explain(&model.model, g, k)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        total_ms += ms;
        let file = ExplanationFile::new(i, g, &mask, te.family(), te.config.seed, ms);
        write_json(&dir.join(explanation_file_name(i)), &file)?;
    }
    let manifest = ExplanationManifest {
        family: te.family(),
        seed: te.config.seed,
        k,
        dataset: ds.name.clone(),
        dataset_sha256: loaded.sha256.clone(),
        model_sha256: model.sha256.clone(),
        graphs: indices.len(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    ctx.config.snapshot(&dir.join("config.toml"))?;

    println!("explained      {} graphs with {}", indices.len(), te.family());
    println!("mean time      {:.3} ms", total_ms / indices.len() as f64);
    println!("wrote {}", dir.display());
    Ok(())
}
