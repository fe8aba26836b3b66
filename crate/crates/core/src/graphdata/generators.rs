use rand::seq::IndexedRandom;
use rand::Rng;

use super::{canonical, Dataset, Edge, Graph, MotifAnnotation};
use crate::{derive_seed, rng_from_seed, Error, Result};

/// Base-graph size for BA-2Motifs; with one attachment per node and a
/// single bridge this gives 25 nodes and 25.5 undirected edges on average.
pub const BA2MOTIFS_BASE_NODES: usize = 20;

/// Base-graph size for BA-MultiShapes, chosen so the corpus averages about
/// 40 nodes once motifs are attached.
pub const MULTISHAPES_BASE_NODES: usize = 29;

const MULTISHAPES_NODE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Motif {
    /// 4-cycle 1-2-3-4 with apex 0 joined to 1 and 2.
    House,
    /// 5-cycle.
    Cycle,
    /// 3×3 lattice.
    Grid,
    /// Hub joined to every vertex of a 5-cycle.
    Wheel,
}

impl Motif {
    pub fn name(self) -> &'static str {
        match self {
            Motif::House => "house",
            Motif::Cycle => "cycle",
            Motif::Grid => "grid",
            Motif::Wheel => "wheel",
        }
    }

    pub fn num_nodes(self) -> usize {
        match self {
            Motif::House | Motif::Cycle => 5,
            Motif::Grid => 9,
            Motif::Wheel => 6,
        }
    }

    /// Edges over local node ids `0..num_nodes()`.
    pub fn edges(self) -> Vec<Edge> {
        match self {
            Motif::House => vec![(1, 2), (2, 3), (3, 4), (1, 4), (0, 1), (0, 2)],
            Motif::Cycle => vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
            Motif::Grid => {
                let mut e = Vec::new();
                for r in 0..3 {
                    for c in 0..3 {
                        let n = r * 3 + c;
                        if c < 2 {
                            e.push((n, n + 1));
                        }
                        if r < 2 {
                            e.push((n, n + 3));
                        }
                    }
                }
                e
            }
            Motif::Wheel => {
                let mut e: Vec<Edge> = (1..=5).map(|i| (0, i)).collect();
                e.extend((1..=5).map(|i| canonical(i, if i == 5 { 1 } else { i + 1 })));
                e
            }
        }
    }

    /// The motif on its own, with constant features.
    pub fn graph(self, node_dim: usize, edge_dim: usize) -> Graph {
        Graph::with_constant_features(self.num_nodes(), self.edges(), node_dim, edge_dim, None)
            .expect("motif topology is valid")
    }
}

/// Preferential-attachment edges: the first new node joins the `attach`
/// seed nodes, every later node joins `attach` distinct existing nodes
/// drawn with probability proportional to degree.
fn ba_edges(num_nodes: usize, attach: usize, rng: &mut impl Rng) -> Result<Vec<Edge>> {
    if attach < 1 || num_nodes < attach + 1 {
        return Err(Error::domain(format!(
            "need num_nodes >= attach + 1 >= 2, got num_nodes={num_nodes}, attach={attach}"
        )));
    }
    let mut edges = Vec::with_capacity(attach * (num_nodes - attach));
    let mut targets: Vec<usize> = (0..attach).collect();
    let mut repeated: Vec<usize> = Vec::new();
    for source in attach..num_nodes {
        for &t in &targets {
            edges.push(canonical(source, t));
        }
        repeated.extend(&targets);
        repeated.extend(std::iter::repeat_n(source, attach));
        let mut next = Vec::with_capacity(attach);
        while next.len() < attach {
            let &cand = repeated.choose(rng).expect("non-empty after first node");
            if !next.contains(&cand) {
                next.push(cand);
            }
        }
        targets = next;
    }
    Ok(edges)
}

/// A Barabási–Albert graph with constant unit node and edge features.
pub fn gen_ba(num_nodes: usize, attach: usize, seed: u64) -> Result<Graph> {
    let mut rng = rng_from_seed(seed);
    let edges = ba_edges(num_nodes, attach, &mut rng)?;
    Graph::with_constant_features(num_nodes, edges, 1, 1, None).map_err(Error::Domain)
}

/// Appends `motif` after the current nodes and bridges one random motif node
/// to one random base node. Returns the motif's edges (without the bridge).
fn attach_motif(edges: &mut Vec<Edge>, num_nodes: &mut usize, base_nodes: usize, motif: Motif, rng: &mut impl Rng) -> Vec<Edge> {
    let offset = *num_nodes;
    let local: Vec<Edge> = motif.edges().into_iter().map(|(u, v)| (u + offset, v + offset)).collect();
    edges.extend(&local);
    let from = offset + rng.random_range(0..motif.num_nodes());
    let to = rng.random_range(0..base_nodes);
    edges.push(canonical(from, to));
    *num_nodes += motif.num_nodes();
    local
}

fn motif_graph(
    base_nodes: usize,
    motifs: &[Motif],
    node_dim: usize,
    label: usize,
    rng: &mut impl Rng,
) -> Result<(Graph, MotifAnnotation)> {
    let mut edges = ba_edges(base_nodes, 1, rng)?;
    let mut n = base_nodes;
    let mut gt = Vec::new();
    for &m in motifs {
        gt.extend(attach_motif(&mut edges, &mut n, base_nodes, m, rng));
    }
    gt.sort_unstable();
    let graph = Graph::with_constant_features(n, edges, node_dim, 1, Some(label)).map_err(Error::Domain)?;
    let ann = MotifAnnotation {
        ground_truth_edges: gt,
        motif_names: motifs.iter().map(|m| m.name().to_string()).collect(),
    };
    Ok((graph, ann))
}

/// BA-2Motifs: odd indices get a house (label 1), even indices a 5-cycle
/// (label 0), each bridged to a 20-node BA base.
pub fn gen_ba2motifs(count: usize, seed: u64) -> Result<Dataset> {
    gen_ba2motifs_with_base(count, BA2MOTIFS_BASE_NODES, seed)
}

/// BA-2Motifs with a custom base size (small fixtures for exhaustive checks).
pub fn gen_ba2motifs_with_base(count: usize, base_nodes: usize, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::domain(format!("count must be >= 2, got {count}")));
    }
    let mut graphs = Vec::with_capacity(count);
    let mut anns = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let label = i % 2;
        let motif = if label == 1 { Motif::House } else { Motif::Cycle };
        let (g, a) = motif_graph(base_nodes, &[motif], 1, label, &mut rng)?;
        graphs.push(g);
        anns.push(Some(a));
    }
    Dataset::new("ba2motifs", graphs, anns, 2)
}

/// BA-MultiShapes: label 1 carries exactly two of {house, grid, wheel};
/// label 0 carries none, exactly one, or all three.
pub fn gen_ba_multishapes(count: usize, seed: u64) -> Result<Dataset> {
    use Motif::{Grid, House, Wheel};
    if count < 2 {
        return Err(Error::domain(format!("count must be >= 2, got {count}")));
    }
    let class0: [&[Motif]; 5] = [&[], &[House], &[Grid], &[Wheel], &[House, Grid, Wheel]];
    let class1: [&[Motif]; 3] = [&[House, Grid], &[House, Wheel], &[Grid, Wheel]];
    let mut graphs = Vec::with_capacity(count);
    let mut anns = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let label = i % 2;
        let motifs = if label == 1 {
            *class1.choose(&mut rng).unwrap()
        } else {
            *class0.choose(&mut rng).unwrap()
        };
        let (g, a) = motif_graph(MULTISHAPES_BASE_NODES, motifs, MULTISHAPES_NODE_DIM, label, &mut rng)?;
        graphs.push(g);
        anns.push(Some(a));
    }
    Dataset::new("ba_multishapes", graphs, anns, 2)
}
