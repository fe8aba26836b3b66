use crate::graphdata::Graph;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Disjoint union of graphs with both message directions expanded.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub num_graphs: usize,
    pub num_nodes: usize,
    /// Undirected edges over the whole batch.
    pub num_edges: usize,
    /// `num_nodes × node_dim`
    pub x: Tensor,
    /// `2·num_edges × edge_dim`, absent when graphs carry no edge features.
    pub edge_attr: Option<Tensor>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Undirected batch edge behind each directed message.
    pub dir_to_edge: Vec<usize>,
    pub node_graph: Vec<usize>,
    /// Start of each graph's undirected edges; has `num_graphs + 1` entries.
    pub edge_offsets: Vec<usize>,
    pub node_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::domain("cannot batch zero graphs"));
        }
        let dn = graphs[0].node_dim();
        let de = graphs[0].edge_dim();
        if graphs.iter().any(|g| g.node_dim() != dn || (g.num_edges() > 0 && g.edge_dim() != de)) {
            return Err(Error::domain("graphs in a batch must share feature widths"));
        }
        let mut x = Vec::new();
        let mut attr = Vec::new();
        let (mut src, mut dst, mut dir_to_edge, mut node_graph) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut edge_offsets = vec![0];
        let mut node_offsets = vec![0];
        let (mut n_off, mut e_off) = (0, 0);
        for (gi, g) in graphs.iter().enumerate() {
            for row in &g.node_features {
                x.extend_from_slice(row);
            }
            node_graph.extend(std::iter::repeat_n(gi, g.num_nodes));
            for (ei, &(u, v)) in g.edges.iter().enumerate() {
                for (a, b) in [(u, v), (v, u)] {
                    src.push(n_off + a);
                    dst.push(n_off + b);
                    dir_to_edge.push(e_off + ei);
                    if de > 0 {
                        attr.extend_from_slice(&g.edge_features[ei]);
                    }
                }
            }
            n_off += g.num_nodes;
            e_off += g.num_edges();
            node_offsets.push(n_off);
            edge_offsets.push(e_off);
        }
        let edge_attr = if de > 0 && !src.is_empty() {
            Some(Tensor::new(vec![src.len(), de], attr)?)
        } else {
            None
        };
        Ok(Self {
            num_graphs: graphs.len(),
            num_nodes: n_off,
            num_edges: e_off,
            x: Tensor::new(vec![n_off, dn], x)?,
            edge_attr,
            src,
            dst,
            dir_to_edge,
            node_graph,
            edge_offsets,
            node_offsets,
        })
    }

    /// Batch-global edge index range of graph `g`.
    pub fn edge_range(&self, g: usize) -> std::ops::Range<usize> {
        self.edge_offsets[g]..self.edge_offsets[g + 1]
    }

    pub fn node_range(&self, g: usize) -> std::ops::Range<usize> {
        self.node_offsets[g]..self.node_offsets[g + 1]
    }
}
