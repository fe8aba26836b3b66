//! On-disk artifacts shared between commands.
//!
//! A checkpoint `x.ckpt` holds raw parameters; `x.ckpt.json` is its sidecar
//! with the configuration and the hashes of everything it was built from.

use std::path::{Path, PathBuf};

use genexp::eval::EvalReport;
use genexp::explainers::{ExplainerConfig, ExplanationMask, Family, LossRecord, TrainedExplainer};
use genexp::graphdata::read_graphs_str;
use genexp::tensor::{read_params, write_params, ParamStore};
use genexp::{Dataset, GnnConfig, GnnModel, Graph};
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError, CliResult};
use crate::fsutil::{atomic_write, read_bytes, read_json, sha256_hex, with_suffix, write_json};

pub struct LoadedDataset {
    pub dataset: Dataset,
    pub sha256: String,
}

pub fn load_dataset(path: &Path) -> CliResult<LoadedDataset> {
    if !path.exists() {
        return Err(usage(format!("dataset file {} does not exist", path.display())));
    }
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| usage(format!("{} is not UTF-8", path.display())))?;
    let dataset = read_graphs_str(text, path)?;
    Ok(LoadedDataset {
        dataset,
        sha256: sha256_hex(&bytes),
    })
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".json")
}

fn params_bytes(params: &ParamStore) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_params(params, &mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(buf)
}

fn load_params(path: &Path) -> CliResult<(ParamStore, String)> {
    if !path.exists() {
        return Err(usage(format!("checkpoint {} does not exist", path.display())));
    }
    let bytes = read_bytes(path)?;
    let params = read_params(bytes.as_slice()).map_err(|e| CliError::Integrity(format!("checkpoint {} is unreadable: {e}", path.display())))?;
    Ok((params, sha256_hex(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub gnn_config: GnnConfig,
    pub dataset: String,
    pub dataset_sha256: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub test_accuracy: f64,
}

pub struct LoadedModel {
    pub model: GnnModel,
    pub sidecar: ModelSidecar,
    pub sha256: String,
}

/// Writes the sidecar first and the checkpoint last, so a checkpoint on
/// disk always has its sidecar.
pub fn save_model(path: &Path, model: &GnnModel, sidecar: &ModelSidecar) -> CliResult<String> {
    let bytes = params_bytes(&model.params)?;
    write_json(&sidecar_path(path), sidecar)?;
    atomic_write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let (params, sha256) = load_params(path)?;
    let sidecar: ModelSidecar = read_json(&sidecar_path(path))?;
    let model = GnnModel::from_params(sidecar.gnn_config.clone(), params)
        .map_err(|e| CliError::Integrity(format!("checkpoint {} does not match its sidecar: {e}", path.display())))?;
    Ok(LoadedModel { model, sidecar, sha256 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSidecar {
    pub explainer_config: ExplainerConfig,
    pub dataset: String,
    pub dataset_sha256: String,
    pub model_sha256: String,
    pub history: Vec<LossRecord>,
}

pub struct LoadedExplainer {
    pub explainer: TrainedExplainer,
    pub sidecar: ExplainerSidecar,
}

pub fn save_explainer(path: &Path, te: &TrainedExplainer, sidecar: &ExplainerSidecar) -> CliResult<()> {
    let bytes = params_bytes(&te.params)?;
    write_json(&sidecar_path(path), sidecar)?;
    atomic_write(path, &bytes)
}

pub fn load_explainer(path: &Path) -> CliResult<LoadedExplainer> {
    let (params, _) = load_params(path)?;
    let sidecar: ExplainerSidecar = read_json(&sidecar_path(path))?;
    let mut explainer = TrainedExplainer::from_params(sidecar.explainer_config.clone(), params)?;
    explainer.history = sidecar.history.clone();
    Ok(LoadedExplainer { explainer, sidecar })
}

/// Fails unless `actual` equals the hash recorded at training time.
pub fn check_hash(what: &str, path: &Path, expected: &str, actual: &str) -> CliResult<()> {
    if expected == actual {
        return Ok(());
    }
    Err(CliError::Integrity(format!(
        "{what} hash mismatch for {}: explainer was trained against {expected}, file has {actual}",
        path.display()
    )))
}

/// One explained graph as written by `explain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub graph_index: usize,
    pub target_label: usize,
    pub edge_weights: Vec<f64>,
    pub hard_edges: Vec<[usize; 2]>,
    pub family: Family,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl ExplanationFile {
    pub fn new(graph_index: usize, graph: &Graph, mask: &ExplanationMask, family: Family, seed: u64, wall_time_ms: f64) -> Self {
        Self {
            graph_index,
            target_label: mask.target_label,
            edge_weights: mask.edge_weights.clone(),
            hard_edges: mask.hard_edge_ids().into_iter().map(|i| [graph.edges[i].0, graph.edges[i].1]).collect(),
            family,
            seed,
            wall_time_ms,
        }
    }

    /// Rebuilds the mask against the graph it explains.
    pub fn mask(&self, graph: &Graph) -> CliResult<ExplanationMask> {
        if self.edge_weights.len() != graph.num_edges() {
            return Err(usage(format!(
                "explanation of graph {} has {} weights but the graph has {} edges",
                self.graph_index,
                self.edge_weights.len(),
                graph.num_edges()
            )));
        }
        let mut hard = vec![false; graph.num_edges()];
        for &[u, v] in &self.hard_edges {
            let i = graph
                .edge_index(u, v)
                .ok_or_else(|| usage(format!("explanation of graph {} names missing edge ({u}, {v})", self.graph_index)))?;
            hard[i] = true;
        }
        Ok(ExplanationMask {
            edge_weights: self.edge_weights.clone(),
            hard_edges: Some(hard),
            target_label: self.target_label,
        })
    }
}

/// Written once per explanation directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationManifest {
    pub family: Family,
    pub seed: u64,
    pub k: usize,
    pub dataset: String,
    pub dataset_sha256: String,
    pub model_sha256: String,
    pub graphs: usize,
}

pub const MANIFEST: &str = "manifest.json";

pub fn explanation_file_name(graph_index: usize) -> String {
    format!("graph_{graph_index:05}.json")
}

/// Explanation files in `dir`, sorted by name.
pub fn list_explanations(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| usage(format!("cannot list {}: {e}", dir.display())))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("graph_") && name.ends_with(".json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_report(path: &Path) -> CliResult<EvalReport> {
    let report: EvalReport = read_json(path)?;
    report
        .verify()
        .map_err(|e| CliError::Integrity(format!("{}: {e}", path.display())))?;
    Ok(report)
}
