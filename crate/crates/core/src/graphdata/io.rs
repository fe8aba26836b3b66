//! JSON graph files.
//!
//! ```json
//! {"num_classes": 2,
//!  "graphs": [{"num_nodes": 3, "edges": [[0,1],[1,2]],
//!              "node_features": [[1],[1],[1]], "edge_features": [[1],[1]],
//!              "label": 0, "ground_truth_edges": [[0,1]], "split": "train"}]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Edge, Graph, MotifAnnotation, Split};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    num_classes: usize,
    graphs: Vec<GraphRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    node_features: Vec<Vec<f64>>,
    edge_features: Vec<Vec<f64>>,
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

fn pairs(edges: &[Edge]) -> Vec<[usize; 2]> {
    edges.iter().map(|&(u, v)| [u, v]).collect()
}

pub fn write_graphs_string(dataset: &Dataset) -> String {
    let file = GraphFile {
        name: Some(dataset.name.clone()),
        num_classes: dataset.num_classes,
        graphs: dataset
            .graphs
            .iter()
            .zip(&dataset.annotations)
            .zip(&dataset.split)
            .map(|((g, a), s)| GraphRecord {
                num_nodes: g.num_nodes,
                edges: pairs(&g.edges),
                node_features: g.node_features.clone(),
                edge_features: g.edge_features.clone(),
                label: g.label,
                ground_truth_edges: a.as_ref().map(|a| pairs(&a.ground_truth_edges)),
                motif_names: a.as_ref().map(|a| a.motif_names.clone()),
                split: *s,
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("dataset serializes")
}

pub fn write_graphs(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, write_graphs_string(dataset)).map_err(|e| Error::io(path, e))
}

/// Parses a graph file held in memory; `origin` names it in errors.
pub fn read_graphs_str(text: &str, origin: &Path) -> Result<Dataset> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        detail: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let mut graphs = Vec::with_capacity(file.graphs.len());
    let mut annotations = Vec::with_capacity(file.graphs.len());
    let mut split = Vec::with_capacity(file.graphs.len());
    for (i, r) in file.graphs.into_iter().enumerate() {
        let edges: Vec<Edge> = r.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = Graph {
            num_nodes: r.num_nodes,
            edges,
            node_features: r.node_features,
            edge_features: r.edge_features,
            label: r.label,
        };
        g.validate().map_err(|detail| Error::Validation { graph: i, detail })?;
        graphs.push(g);
        annotations.push(r.ground_truth_edges.map(|gt| MotifAnnotation {
            ground_truth_edges: gt.iter().map(|e| (e[0], e[1])).collect(),
            motif_names: r.motif_names.unwrap_or_default(),
        }));
        split.push(r.split);
    }
    let ds = Dataset {
        name: file.name.unwrap_or_else(|| {
            origin.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        }),
        graphs,
        annotations,
        num_classes: file.num_classes,
        split,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn read_graphs(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_graphs_str(&text, path)
}
