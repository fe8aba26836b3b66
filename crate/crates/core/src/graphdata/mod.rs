//! Graph data model, synthetic motif datasets, splits and file I/O.

mod canon;
mod generators;
mod io;
mod split;

pub use generators::{
    gen_ba, gen_ba2motifs, gen_ba2motifs_with_base, gen_ba_multishapes, Motif, BA2MOTIFS_BASE_NODES,
    MULTISHAPES_BASE_NODES,
};
pub use canon::{canonical_form, is_isomorphic, CanonicalForm};
pub use io::{read_graphs, read_graphs_str, write_graphs, write_graphs_string};
pub use split::{split, SplitPlan};

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Undirected edge stored as `(min, max)`.
pub type Edge = (usize, usize);

pub fn canonical(u: usize, v: usize) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// An undirected graph with node/edge features and an optional class label.
///
/// Edges are stored once, canonical and lexicographically sorted, so an edge
/// index is a stable identifier for masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
    pub node_features: Vec<Vec<f64>>,
    pub edge_features: Vec<Vec<f64>>,
    pub label: Option<usize>,
}

impl Graph {
    /// Canonicalizes and sorts `edges` (carrying edge features along) and
    /// validates the result.
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        node_features: Vec<Vec<f64>>,
        edge_features: Vec<Vec<f64>>,
        label: Option<usize>,
    ) -> std::result::Result<Self, String> {
        if edge_features.len() != edges.len() {
            return Err(format!(
                "{} edges but {} edge feature rows",
                edges.len(),
                edge_features.len()
            ));
        }
        let mut paired: Vec<(Edge, Vec<f64>)> = edges
            .into_iter()
            .map(|(u, v)| canonical(u, v))
            .zip(edge_features)
            .collect();
        paired.sort_by_key(|p| p.0);
        let (edges, edge_features) = paired.into_iter().unzip();
        let g = Graph {
            num_nodes,
            edges,
            node_features,
            edge_features,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    /// Graph with constant `1.0` features of the given widths.
    pub fn with_constant_features(
        num_nodes: usize,
        edges: Vec<Edge>,
        node_dim: usize,
        edge_dim: usize,
        label: Option<usize>,
    ) -> std::result::Result<Self, String> {
        let ne = edges.len();
        Graph::new(
            num_nodes,
            edges,
            vec![vec![1.0; node_dim]; num_nodes],
            vec![vec![1.0; edge_dim]; ne],
            label,
        )
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.num_nodes == 0 {
            return Err("graph has no nodes".into());
        }
        if self.node_features.len() != self.num_nodes {
            return Err(format!(
                "{} nodes but {} node feature rows",
                self.num_nodes,
                self.node_features.len()
            ));
        }
        if self.edge_features.len() != self.edges.len() {
            return Err(format!(
                "{} edges but {} edge feature rows",
                self.edges.len(),
                self.edge_features.len()
            ));
        }
        let dn = self.node_features[0].len();
        if self.node_features.iter().any(|r| r.len() != dn) {
            return Err("ragged node feature rows".into());
        }
        if let Some(first) = self.edge_features.first() {
            if self.edge_features.iter().any(|r| r.len() != first.len()) {
                return Err("ragged edge feature rows".into());
            }
        }
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u >= self.num_nodes || v >= self.num_nodes {
                return Err(format!("edge {i} ({u}, {v}) has endpoint >= num_nodes {}", self.num_nodes));
            }
            if u == v {
                return Err(format!("edge {i} is a self-loop on node {u}"));
            }
            if u > v {
                return Err(format!("edge {i} ({u}, {v}) is not in canonical order"));
            }
            if i > 0 {
                let prev = self.edges[i - 1];
                if prev == (u, v) {
                    return Err(format!("duplicate edge ({u}, {v})"));
                }
                if prev > (u, v) {
                    return Err(format!("edges not sorted at index {i}"));
                }
            }
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_dim(&self) -> usize {
        self.node_features.first().map_or(0, Vec::len)
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_features.first().map_or(0, Vec::len)
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&canonical(u, v)).ok()
    }

    /// Neighbor lists as `(neighbor, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Number of connected components over all nodes.
    pub fn num_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes];
        let mut count = 0;
        for s in 0..self.num_nodes {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &(y, _) in &adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        q.push_back(y);
                    }
                }
            }
        }
        count
    }

    /// Whether the given edges form one connected piece (an empty set counts
    /// as connected).
    pub fn edges_connected(&self, edge_ids: &[usize]) -> bool {
        edge_components(&edge_ids.iter().map(|&i| self.edges[i]).collect::<Vec<_>>()) <= 1
    }

    /// The standalone graph spanned by `edge_ids`: nodes are relabeled in
    /// ascending order of their original id, features are carried over.
    pub fn edge_subgraph(&self, edge_ids: &[usize]) -> Graph {
        let nodes: BTreeSet<usize> = edge_ids
            .iter()
            .flat_map(|&i| [self.edges[i].0, self.edges[i].1])
            .collect();
        let map: std::collections::HashMap<usize, usize> =
            nodes.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let edges = edge_ids
            .iter()
            .map(|&i| (map[&self.edges[i].0], map[&self.edges[i].1]))
            .collect();
        let node_features = nodes.iter().map(|&n| self.node_features[n].clone()).collect();
        let edge_features = edge_ids.iter().map(|&i| self.edge_features[i].clone()).collect();
        Graph::new(nodes.len().max(1), edges, pad_features(node_features, self.node_dim()), edge_features, self.label)
            .expect("subgraph of a valid graph is valid")
    }

    /// Applies a node relabeling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let mut node_features = vec![Vec::new(); self.num_nodes];
        for (old, &new) in perm.iter().enumerate() {
            node_features[new] = self.node_features[old].clone();
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Graph::new(self.num_nodes, edges, node_features, self.edge_features.clone(), self.label)
            .expect("permutation preserves validity")
    }
}

fn pad_features(mut rows: Vec<Vec<f64>>, dim: usize) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        rows.push(vec![1.0; dim]);
    }
    rows
}

/// Connected components among the nodes touched by `edges`.
pub fn edge_components(edges: &[Edge]) -> usize {
    let nodes: BTreeSet<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    let idx: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let n = p[c];
            p[c] = r;
            c = n;
        }
        r
    }
    let mut comps = nodes.len();
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, idx[&u]), find(&mut parent, idx[&v]));
        if a != b {
            parent[a] = b;
            comps -= 1;
        }
    }
    comps
}

/// Planted explanation for a synthetic graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifAnnotation {
    pub ground_truth_edges: Vec<Edge>,
    pub motif_names: Vec<String>,
}

impl MotifAnnotation {
    /// 0/1 per edge of `graph`.
    pub fn edge_labels(&self, graph: &Graph) -> Vec<bool> {
        let gt: BTreeSet<Edge> = self.ground_truth_edges.iter().copied().collect();
        graph.edges.iter().map(|e| gt.contains(e)).collect()
    }

    pub fn edge_ids(&self, graph: &Graph) -> Vec<usize> {
        self.ground_truth_edges
            .iter()
            .filter_map(|&(u, v)| graph.edge_index(u, v))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unseen => "unseen",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unseen" => Ok(Split::Unseen),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// A labeled graph corpus with optional annotations and split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub annotations: Vec<Option<MotifAnnotation>>,
    pub num_classes: usize,
    pub split: Vec<Option<Split>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, annotations: Vec<Option<MotifAnnotation>>, num_classes: usize) -> Result<Self> {
        let n = graphs.len();
        let ds = Dataset {
            name: name.into(),
            graphs,
            annotations,
            num_classes,
            split: vec![None; n],
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.annotations.len() != self.graphs.len() || self.split.len() != self.graphs.len() {
            return Err(Error::domain("annotation/split lists do not match graph count"));
        }
        for (i, g) in self.graphs.iter().enumerate() {
            g.validate().map_err(|detail| Error::Validation { graph: i, detail })?;
            if let Some(y) = g.label {
                if y >= self.num_classes {
                    return Err(Error::Validation {
                        graph: i,
                        detail: format!("label {y} >= num_classes {}", self.num_classes),
                    });
                }
            }
            if let Some(a) = &self.annotations[i] {
                if let Some(e) = a.ground_truth_edges.iter().find(|e| g.edge_index(e.0, e.1).is_none()) {
                    return Err(Error::Validation {
                        graph: i,
                        detail: format!("ground-truth edge {e:?} is not in the edge list"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_split(&self) -> bool {
        self.split.iter().all(Option::is_some)
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    /// Statistics in the reporting convention where every undirected edge
    /// is counted in both directions.
    pub fn stats(&self) -> DatasetStats {
        let n = self.len().max(1) as f64;
        let nodes: usize = self.graphs.iter().map(|g| g.num_nodes).sum();
        let edges: usize = self.graphs.iter().map(|g| g.num_edges()).sum();
        DatasetStats {
            graphs: self.len(),
            node_features: self.graphs.first().map_or(0, Graph::node_dim),
            edge_features: self.graphs.first().map_or(0, Graph::edge_dim),
            avg_nodes: nodes as f64 / n,
            avg_directed_edges: 2.0 * edges as f64 / n,
            avg_degree: if nodes == 0 { 0.0 } else { 2.0 * edges as f64 / nodes as f64 },
            classes: self.num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub graphs: usize,
    pub node_features: usize,
    pub edge_features: usize,
    pub avg_nodes: f64,
    pub avg_directed_edges: f64,
    pub avg_degree: f64,
    pub classes: usize,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "# graphs        {}", self.graphs)?;
        writeln!(f, "# node features {}", self.node_features)?;
        writeln!(f, "# edge features {}", self.edge_features)?;
        writeln!(f, "Avg # nodes     {:.1}", self.avg_nodes)?;
        writeln!(f, "Avg # edges     {:.1}", self.avg_directed_edges)?;
        writeln!(f, "Avg degree      {:.2}", self.avg_degree)?;
        write!(f, "# classes       {}", self.classes)
    }
}
