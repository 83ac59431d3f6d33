//! Planted-partition generator for desk-scale heterogeneous graphs.
//!
//! Every node of every type is assigned to one of `communities` planted
//! communities (balanced, shuffled). Each edge picks its source uniformly and,
//! with probability `boost`, a destination from the source's community;
//! otherwise a destination uniformly at random. Feature rows are the
//! community centroid plus Gaussian noise of standard deviation `noise`.
//! Labels of `target_type` are the community ids.

use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{build_graph, Edge, HeteroGraph, NodeType, Relation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticType {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRelation {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub edges: usize,
    /// When set, a relation of this name holding every edge reversed is added.
    #[serde(default)]
    pub reverse: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub node_types: Vec<SyntheticType>,
    pub relations: Vec<SyntheticRelation>,
    pub communities: usize,
    pub target_type: String,
    pub boost: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.boost) {
            return bad(format!("boost {} outside [0, 1]", self.boost));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be finite and non-negative", self.noise));
        }
        if self.communities == 0 {
            return bad("communities must be positive".into());
        }
        for t in &self.node_types {
            if t.count == 0 {
                return bad(format!("type `{}` has no nodes", t.name));
            }
        }
        if !self.node_types.iter().any(|t| t.name == self.target_type) {
            return bad(format!("target type `{}` is not declared", self.target_type));
        }
        for r in &self.relations {
            if r.edges == 0 {
                return bad(format!("relation `{}` has no edges", r.name));
            }
            for end in [&r.src, &r.dst] {
                if !self.node_types.iter().any(|t| &t.name == end) {
                    return bad(format!("relation `{}` references unknown type `{end}`", r.name));
                }
            }
        }
        Ok(())
    }

    /// Two-type academic stand-in: papers (target, with features) and
    /// featureless authors, linked by `writes` and its reverse `written_by`.
    pub fn academic(papers: usize, authors: usize, classes: usize, boost: f64, seed: u64) -> Self {
        SyntheticSpec {
            node_types: vec![
                SyntheticType {
                    name: "paper".into(),
                    count: papers,
                    feature_dim: 16,
                },
                SyntheticType {
                    name: "author".into(),
                    count: authors,
                    feature_dim: 0,
                },
            ],
            relations: vec![SyntheticRelation {
                name: "writes".into(),
                src: "author".into(),
                dst: "paper".into(),
                edges: papers * 3,
                reverse: Some("written_by".into()),
            }],
            communities: classes,
            target_type: "paper".into(),
            boost,
            noise: 1.5,
            seed,
        }
    }
}

/// Generates a graph from `spec`; a pure function of the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<HeteroGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.communities;

    let mut community: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut members: HashMap<&str, Vec<Vec<usize>>> = HashMap::new();
    let mut features = HashMap::new();
    for t in &spec.node_types {
        let mut assign: Vec<usize> = (0..t.count).map(|i| i % c).collect();
        assign.shuffle(&mut rng);
        let mut by_comm = vec![Vec::new(); c];
        for (i, &k) in assign.iter().enumerate() {
            by_comm[k].push(i);
        }
        if t.feature_dim > 0 {
            let centroids: Vec<Vec<f64>> = (0..c)
                .map(|_| {
                    let v: Vec<f64> = (0..t.feature_dim)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let mut m = Array2::zeros((t.count, t.feature_dim));
            for (i, &k) in assign.iter().enumerate() {
                for j in 0..t.feature_dim {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    m[(i, j)] = centroids[k][j] + spec.noise * eps;
                }
            }
            features.insert(t.name.clone(), m);
        }
        community.insert(&t.name, assign);
        members.insert(&t.name, by_comm);
    }

    let count_of = |name: &str| spec.node_types.iter().find(|t| t.name == name).unwrap().count;
    let mut relations = Vec::new();
    let mut edges = HashMap::new();
    for r in &spec.relations {
        let n_src = count_of(&r.src);
        let n_dst = count_of(&r.dst);
        let mut list = Vec::with_capacity(r.edges);
        for _ in 0..r.edges {
            let src = rng.random_range(0..n_src);
            let intra = rng.random::<f64>() < spec.boost;
            let pool = &members[r.dst.as_str()][community[r.src.as_str()][src]];
            let dst = if intra && !pool.is_empty() {
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..n_dst)
            };
            list.push(Edge::new(src, dst));
        }
        relations.push(Relation::new(&r.name, &r.src, &r.dst));
        if let Some(rev) = &r.reverse {
            relations.push(Relation::new(rev, &r.dst, &r.src));
            let reversed = list.iter().map(|e| Edge::new(e.dst, e.src)).collect();
            edges.insert(rev.clone(), reversed);
        }
        edges.insert(r.name.clone(), list);
    }

    let node_types = spec
        .node_types
        .iter()
        .map(|t| NodeType::new(&t.name, t.count, t.feature_dim))
        .collect();
    let mut labels = HashMap::new();
    labels.insert(
        spec.target_type.clone(),
        community[spec.target_type.as_str()].clone(),
    );
    build_graph(node_types, relations, edges, features, labels)
}
