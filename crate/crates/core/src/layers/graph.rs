use std::sync::Arc;

use crate::hgraph::CsrMatrix;
use crate::tensor::{Index, Matrix};
use crate::transform::{HomoGraph, Subgraph};

/// Edge lists of one message-passing graph, prepared once per trial.
///
/// Edges run `src -> dst` and are sorted by `(dst, src, edge type)`, so the
/// same graph reached through a subgraph or through homogenization yields
/// identical reduction orders.
#[derive(Clone, Debug)]
pub struct MessageGraph {
    pub n_src: usize,
    pub n_dst: usize,
    /// Source and destination are the same node set.
    pub square: bool,
    /// Binarized edges: one per distinct `(src, dst, edge type)`.
    pub src: Index,
    pub dst: Index,
    pub etype: Index,
    pub n_etypes: usize,
    gcn_loops: GcnEdges,
    gcn_plain: GcnEdges,
}

/// Weighted edges with GCN normalization folded into `norm` (`E × 1`).
#[derive(Clone, Debug)]
pub(crate) struct GcnEdges {
    pub src: Index,
    pub dst: Index,
    pub norm: Matrix,
}

impl MessageGraph {
    /// View of one subgraph; rows of its adjacency are destinations.
    pub fn from_subgraph(sub: &Subgraph) -> Self {
        let adj = &sub.adjacency;
        let square = sub.is_square();
        let edges: Vec<(usize, usize, usize)> = adj.iter().map(|(d, s, _)| (s, d, 0)).collect();
        Self::assemble(adj.ncols(), adj.nrows(), square, edges, 1, adj)
    }

    /// View of the homogenized graph. Edge types are the original relation
    /// indices; GCN weights sum multiplicities across relations.
    pub fn from_homograph(hg: &HomoGraph) -> Self {
        let n = hg.num_nodes();
        let types = hg.edge_types();
        let mut edges: Vec<(usize, usize, usize)> = hg
            .src
            .iter()
            .zip(&hg.dst)
            .zip(&types)
            .map(|((&s, &d), &t)| (s, d, t))
            .collect();
        edges.sort_unstable_by_key(|&(s, d, t)| (d, s, t));
        edges.dedup();
        let merged = hg.adjacency();
        Self::assemble(n, n, true, edges, hg.relation_names.len().max(1), &merged)
    }

    fn assemble(
        n_src: usize,
        n_dst: usize,
        square: bool,
        mut edges: Vec<(usize, usize, usize)>,
        n_etypes: usize,
        weighted: &CsrMatrix,
    ) -> Self {
        edges.sort_unstable_by_key(|&(s, d, t)| (d, s, t));
        let src: Index = edges.iter().map(|e| e.0).collect::<Vec<_>>().into();
        let dst: Index = edges.iter().map(|e| e.1).collect::<Vec<_>>().into();
        let etype: Index = edges.iter().map(|e| e.2).collect::<Vec<_>>().into();
        MessageGraph {
            n_src,
            n_dst,
            square,
            src,
            dst,
            etype,
            n_etypes,
            gcn_loops: gcn_edges(weighted, square, true),
            gcn_plain: gcn_edges(weighted, square, false),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// In-degree of every destination over binarized edges.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_dst];
        for &d in self.dst.iter() {
            deg[d] += 1;
        }
        deg
    }

    pub(crate) fn gcn(&self, self_loops: bool) -> &GcnEdges {
        if self_loops && self.square {
            &self.gcn_loops
        } else {
            &self.gcn_plain
        }
    }
}

/// Square graphs get `D^-1/2 (A + I) D^-1/2` (or without `I`); bipartite
/// graphs get the row normalization `D^-1 A` over destinations. Degrees are
/// weighted in-degrees; a zero degree contributes a zero factor.
fn gcn_edges(adj: &CsrMatrix, square: bool, self_loops: bool) -> GcnEdges {
    let mut trip: Vec<(usize, usize, f64)> = adj.iter().map(|(d, s, w)| (s, d, w as f64)).collect();
    if square && self_loops {
        trip.extend((0..adj.nrows()).map(|i| (i, i, 1.0)));
        trip.sort_by_key(|&(s, d, _)| (d, s));
    }
    let mut deg = vec![0.0; adj.nrows()];
    for &(_, d, w) in &trip {
        deg[d] += w;
    }
    let inv = |x: f64| if x > 0.0 { 1.0 / x } else { 0.0 };
    let norm: Vec<f64> = trip
        .iter()
        .map(|&(s, d, w)| {
            if square {
                w * inv((deg[d] * deg[s]).sqrt())
            } else {
                w * inv(deg[d])
            }
        })
        .collect();
    let e = trip.len();
    GcnEdges {
        src: Arc::from(trip.iter().map(|t| t.0).collect::<Vec<_>>()),
        dst: Arc::from(trip.iter().map(|t| t.1).collect::<Vec<_>>()),
        norm: Matrix::from_shape_vec((e, 1), norm).expect("one weight per edge"),
    }
}
