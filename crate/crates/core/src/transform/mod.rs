//! Heterogeneous graph transformations: relation subgraph extraction,
//! meta-path composition, mixed extraction and homogenization, plus the
//! homophily statistic used to judge meta-paths.

mod homophily;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use homophily::{homophily, homophily_of};

use crate::error::{Error, Result};
use crate::hgraph::{CsrMatrix, HeteroGraph, Schema};

/// An ordered chain of relation names.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaPath {
    pub name: String,
    pub relations: Vec<String>,
}

impl MetaPath {
    pub fn new<S: Into<String>>(name: impl Into<String>, relations: impl IntoIterator<Item = S>) -> Self {
        MetaPath {
            name: name.into(),
            relations: relations.into_iter().map(Into::into).collect(),
        }
    }

    /// Checks that every relation exists and consecutive relations chain.
    /// Returns the `(src_type, dst_type)` of the composite relation.
    pub fn endpoints(&self, schema: &Schema) -> Result<(String, String)> {
        let first = self
            .relations
            .first()
            .ok_or_else(|| Error::EmptyMetaPath(self.name.clone()))?;
        let mut prev = schema.relation(first)?;
        let src = prev.src_type.clone();
        for name in &self.relations[1..] {
            let next = schema.relation(name)?;
            if prev.dst_type != next.src_type {
                return Err(Error::MetaPathChain {
                    metapath: self.name.clone(),
                    left: prev.name.clone(),
                    left_dst: prev.dst_type.clone(),
                    right: next.name.clone(),
                    right_src: next.src_type.clone(),
                });
            }
            prev = next;
        }
        Ok((src, prev.dst_type.clone()))
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name, self.relations.join("/"))
    }
}

/// Parses `name=rel1/rel2/...`, the inverse of `Display`.
impl std::str::FromStr for MetaPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, chain) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("meta-path `{s}`: expected name=rel1/rel2/...")]))?;
        let relations: Vec<&str> = chain.split('/').map(str::trim).filter(|r| !r.is_empty()).collect();
        if relations.is_empty() {
            return Err(Error::EmptyMetaPath(name.trim().to_string()));
        }
        Ok(MetaPath::new(name.trim(), relations))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Relation(String),
    MetaPath(String),
}

impl Origin {
    pub fn name(&self) -> &str {
        match self {
            Origin::Relation(n) | Origin::MetaPath(n) => n,
        }
    }
}

/// One adjacency (rows = destination nodes) between two node types.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub origin: Origin,
    pub src_type: String,
    pub dst_type: String,
    pub adjacency: Arc<CsrMatrix>,
}

impl Subgraph {
    pub fn is_square(&self) -> bool {
        self.src_type == self.dst_type
    }
}

/// One subgraph per requested relation, in request order.
pub fn extract_relation_subgraphs(g: &HeteroGraph, relation_names: &[String]) -> Result<Vec<Subgraph>> {
    relation_names
        .iter()
        .map(|name| {
            let r = g.relation(name)?;
            Ok(Subgraph {
                origin: Origin::Relation(name.clone()),
                src_type: r.src_type.clone(),
                dst_type: r.dst_type.clone(),
                adjacency: Arc::new(g.adjacency(name)?.clone()),
            })
        })
        .collect()
}

/// Meta-path subgraph whose counts are the number of meta-path instances
/// between each node pair.
///
/// With rows indexing destinations every stored matrix is the transpose of
/// the source-major adjacency, so the product is taken right to left:
/// `A_rl · … · A_r1`.
pub fn compose_metapath(g: &HeteroGraph, mp: &MetaPath) -> Result<Subgraph> {
    let (src_type, dst_type) = mp.endpoints(g.schema())?;
    let mut acc = g.adjacency(&mp.relations[0])?.clone();
    for name in &mp.relations[1..] {
        acc = g
            .adjacency(name)?
            .matmul(&acc)
            .ok_or_else(|| Error::Overflow(mp.name.clone()))?;
    }
    Ok(Subgraph {
        origin: Origin::MetaPath(mp.name.clone()),
        src_type,
        dst_type,
        adjacency: Arc::new(acc),
    })
}

/// Relation subgraphs followed by meta-path subgraphs.
pub fn extract_mixed(g: &HeteroGraph, relation_names: &[String], metapaths: &[MetaPath]) -> Result<Vec<Subgraph>> {
    let mut out = extract_relation_subgraphs(g, relation_names)?;
    for mp in metapaths {
        out.push(compose_metapath(g, mp)?);
    }
    Ok(out)
}

/// A heterogeneous graph flattened onto global node ids while keeping the
/// node and edge type maps.
///
/// Global id of local node `i` of type `t` is `offsets[t] + i`. Edges are laid
/// out relation by relation (each relation's block contiguous, in the
/// relation's row-major order), so the edge type is an offset lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct HomoGraph {
    pub type_names: Vec<String>,
    pub relation_names: Vec<String>,
    offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub counts: Vec<u64>,
}

impl HomoGraph {
    pub fn num_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn offset(&self, t: usize) -> usize {
        self.offsets[t]
    }

    pub fn type_count(&self, t: usize) -> usize {
        self.offsets[t + 1] - self.offsets[t]
    }

    pub fn global_id(&self, t: usize, local: usize) -> usize {
        debug_assert!(local < self.type_count(t));
        self.offsets[t] + local
    }

    /// `(type index, local id)` of a global id.
    pub fn local_id(&self, global: usize) -> (usize, usize) {
        let t = self.node_type_of(global);
        (t, global - self.offsets[t])
    }

    pub fn node_type_of(&self, global: usize) -> usize {
        assert!(global < self.num_nodes(), "global id {global} out of range");
        self.offsets.partition_point(|&o| o <= global) - 1
    }

    pub fn edge_type_of(&self, edge: usize) -> usize {
        assert!(edge < self.num_edges(), "edge {edge} out of range");
        self.edge_offsets.partition_point(|&o| o <= edge) - 1
    }

    /// Edge type per edge, materialized.
    pub fn edge_types(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_edges());
        for k in 0..self.relation_names.len() {
            out.extend(std::iter::repeat_n(k, self.edge_offsets[k + 1] - self.edge_offsets[k]));
        }
        out
    }

    /// Merged adjacency over global ids (rows = destinations), summing counts
    /// of parallel edges from different relations.
    pub fn adjacency(&self) -> CsrMatrix {
        let n = self.num_nodes();
        let trip: Vec<_> = (0..self.num_edges())
            .map(|e| (self.dst[e], self.src[e], self.counts[e]))
            .collect();
        CsrMatrix::from_triplets(n, n, &trip)
    }
}

pub fn homogenize(g: &HeteroGraph) -> HomoGraph {
    let mut offsets = vec![0];
    for t in g.node_types() {
        offsets.push(offsets.last().unwrap() + t.count);
    }
    let schema = g.schema();
    let mut edge_offsets = vec![0];
    let (mut src, mut dst, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for (k, r) in g.relations().iter().enumerate() {
        let s_off = offsets[schema.type_index(&r.src_type).expect("validated at build")];
        let d_off = offsets[schema.type_index(&r.dst_type).expect("validated at build")];
        for (d, s, c) in g.adjacency_at(k).iter() {
            src.push(s_off + s);
            dst.push(d_off + d);
            counts.push(c);
        }
        edge_offsets.push(src.len());
    }
    HomoGraph {
        type_names: g.node_types().iter().map(|t| t.name.clone()).collect(),
        relation_names: g.relations().iter().map(|r| r.name.clone()).collect(),
        offsets,
        edge_offsets,
        src,
        dst,
        counts,
    }
}
