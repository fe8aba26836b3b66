//! Canonical labeling of small unlabeled graphs.
//!
//! Colour refinement with individualization: every leaf of the search tree
//! is a discrete colouring, i.e. a relabeling, and the canonical form is the
//! lexicographically smallest relabeled edge list among the leaves.

use super::{canonical, Edge};

/// A relabeled edge list; two graphs are isomorphic iff their forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
}

fn refine(adj: &[Vec<usize>], colors: &mut Vec<usize>) {
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..adj.len())
            .map(|v| {
                let mut n: Vec<usize> = adj[v].iter().map(|&u| colors[u]).collect();
                n.sort_unstable();
                (colors[v], n)
            })
            .collect();
        let mut uniq = sigs.clone();
        uniq.sort();
        uniq.dedup();
        let before = colors.iter().copied().collect::<std::collections::BTreeSet<_>>().len();
        *colors = sigs.iter().map(|s| uniq.binary_search(s).expect("present")).collect();
        if uniq.len() == before {
            return;
        }
    }
}

fn search(adj: &[Vec<usize>], edges: &[Edge], colors: Vec<usize>, best: &mut Option<Vec<Edge>>) {
    let n = adj.len();
    let mut counts = vec![0usize; n];
    for &c in &colors {
        counts[c] += 1;
    }
    match (0..n).find(|&c| counts[c] > 1) {
        None => {
            let mut relabeled: Vec<Edge> = edges.iter().map(|&(u, v)| canonical(colors[u], colors[v])).collect();
            relabeled.sort_unstable();
            if best.as_ref().is_none_or(|b| relabeled < *b) {
                *best = Some(relabeled);
            }
        }
        Some(cell) => {
            // Swapping two vertices with the same neighbours is an
            // automorphism, so one branch per twin class suffices.
            let mut tried: Vec<Vec<usize>> = Vec::new();
            for v in (0..n).filter(|&v| colors[v] == cell) {
                let mut nb = adj[v].clone();
                nb.sort_unstable();
                let twin = tried.iter().any(|t| same_up_to_pair(t, &nb, v));
                if twin {
                    continue;
                }
                tried.push(with_self(nb, v));
                // v goes first within its cell; everything else keeps its order.
                let mut c: Vec<usize> = colors.iter().map(|&x| 2 * x + usize::from(x == cell)).collect();
                c[v] = 2 * cell;
                let mut ranks: Vec<usize> = c.clone();
                ranks.sort_unstable();
                ranks.dedup();
                let mut c: Vec<usize> = c.iter().map(|x| ranks.binary_search(x).expect("present")).collect();
                refine(adj, &mut c);
                search(adj, edges, c, best);
            }
        }
    }
}

/// Closed neighbourhood tagged with its owner, for twin checks.
fn with_self(mut nb: Vec<usize>, v: usize) -> Vec<usize> {
    nb.push(v);
    nb
}

/// Whether `v` (with sorted neighbours `nb`) is a twin of the vertex whose
/// entry is `tagged`: equal neighbourhoods once the pair itself is ignored.
fn same_up_to_pair(tagged: &[usize], nb: &[usize], v: usize) -> bool {
    let (u, their) = tagged.split_last().expect("tagged");
    let strip = |xs: &[usize], a: usize, b: usize| xs.iter().copied().filter(|&x| x != a && x != b).collect::<Vec<_>>();
    strip(their, *u, v) == strip(nb, *u, v)
}

/// Canonical form of the graph on `num_nodes` nodes with `edges`.
pub fn canonical_form(num_nodes: usize, edges: &[Edge]) -> CanonicalForm {
    let mut adj = vec![Vec::new(); num_nodes];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut colors = vec![0; num_nodes];
    refine(&adj, &mut colors);
    let mut best = None;
    search(&adj, edges, colors, &mut best);
    CanonicalForm {
        num_nodes,
        edges: best.unwrap_or_default(),
    }
}

pub fn is_isomorphic(a: &super::Graph, b: &super::Graph) -> bool {
    a.num_nodes == b.num_nodes
        && a.num_edges() == b.num_edges()
        && canonical_form(a.num_nodes, &a.edges) == canonical_form(b.num_nodes, &b.edges)
}
