//! Random graph fixtures shared by integration tests.
#![allow(dead_code)]

use hgnn_space::hgraph::{Edge, HeteroGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}

/// Random heterogeneous graph: up to `max_types` node types with
/// `1..=max_per_type` nodes each, 1–5 relations between random type pairs,
/// random multi-edges, and `feat_dim`-wide features on every type.
pub fn random_hetero(seed: u64, max_types: usize, max_per_type: usize, feat_dim: usize) -> HeteroGraph {
    let mut r = rng(seed);
    let n_types = r.random_range(1..=max_types);
    let counts: Vec<usize> = (0..n_types).map(|_| r.random_range(1..=max_per_type)).collect();
    let n_rel = r.random_range(1..=5);
    let mut b = HeteroGraph::builder();
    for (t, &c) in counts.iter().enumerate() {
        b = b
            .node_type(&format!("t{t}"), c, feat_dim)
            .features(&format!("t{t}"), random_matrix(c, feat_dim, seed * 31 + t as u64));
    }
    for k in 0..n_rel {
        let s = r.random_range(0..n_types);
        let d = r.random_range(0..n_types);
        let m = r.random_range(0..=(counts[s] * counts[d]).min(60));
        let edges: Vec<Edge> = (0..m)
            .map(|_| Edge::new(r.random_range(0..counts[s]), r.random_range(0..counts[d])))
            .collect();
        let name = format!("r{k}");
        b = b.relation(&name, &format!("t{s}"), &format!("t{d}")).edges(&name, edges);
    }
    b.build().expect("random graph is well formed")
}

/// Single node type with one relation of random edges.
pub fn random_homogeneous(seed: u64, n: usize, edges: usize, feat_dim: usize) -> HeteroGraph {
    let mut r = rng(seed);
    let list: Vec<Edge> = (0..edges)
        .map(|_| Edge::new(r.random_range(0..n), r.random_range(0..n)))
        .collect();
    HeteroGraph::builder()
        .node_type("v", n, feat_dim)
        .features("v", random_matrix(n, feat_dim, seed + 1))
        .relation("e", "v", "v")
        .edges("e", list)
        .build()
        .unwrap()
}
