//! Heterogeneous graph data model.
//!
//! Node ids are dense and 0-based per node type. Each relation stores one
//! adjacency matrix with rows indexing destination nodes and columns indexing
//! source nodes, so gathering messages for a node is a row scan. Parallel
//! edges are kept as integer multiplicities.

mod bundle;
mod csr;
mod synthetic;

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use bundle::{load_graph, save_graph};
pub use csr::CsrMatrix;
pub use synthetic::{generate_synthetic, SyntheticRelation, SyntheticSpec, SyntheticType};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
    /// Width of the per-node feature rows; 0 means featureless.
    pub feature_dim: usize,
}

impl NodeType {
    pub fn new(name: impl Into<String>, count: usize, feature_dim: usize) -> Self {
        NodeType {
            name: name.into(),
            count,
            feature_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub src_type: String,
    pub dst_type: String,
}

impl Relation {
    pub fn new(name: impl Into<String>, src: impl Into<String>, dst: impl Into<String>) -> Self {
        Relation {
            name: name.into(),
            src_type: src.into(),
            dst_type: dst.into(),
        }
    }
}

/// A raw directed edge `src -> dst` with multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub count: u64,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Self {
        Edge { src, dst, count: 1 }
    }
}

impl From<(usize, usize)> for Edge {
    fn from((src, dst): (usize, usize)) -> Self {
        Edge::new(src, dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Incoming edges per destination node (row sums).
    In,
    /// Outgoing edges per source node (column sums).
    Out,
}

/// Names and sizes of a graph without its edges or features. Models are
/// built against a schema so they can be reused across graph variants (for
/// example the training graph of a link-prediction split).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub node_types: Vec<NodeType>,
    pub relations: Vec<Relation>,
}

impl Schema {
    pub fn type_index(&self, name: &str) -> Result<usize> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn relation_index(&self, name: &str) -> Result<usize> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        Ok(&self.relations[self.relation_index(name)?])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    schema: Schema,
    adjacency: Vec<CsrMatrix>,
    features: Vec<Option<Array2<f64>>>,
    labels: Vec<Option<Vec<usize>>>,
}

impl HeteroGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.schema.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.schema.relations
    }

    pub fn node_type(&self, name: &str) -> Result<&NodeType> {
        Ok(&self.schema.node_types[self.schema.type_index(name)?])
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.schema.relation(name)
    }

    pub fn adjacency(&self, relation: &str) -> Result<&CsrMatrix> {
        Ok(&self.adjacency[self.schema.relation_index(relation)?])
    }

    pub fn adjacency_at(&self, k: usize) -> &CsrMatrix {
        &self.adjacency[k]
    }

    pub fn features(&self, node_type: &str) -> Result<Option<&Array2<f64>>> {
        Ok(self.features[self.schema.type_index(node_type)?].as_ref())
    }

    pub fn features_at(&self, t: usize) -> Option<&Array2<f64>> {
        self.features[t].as_ref()
    }

    pub fn labels(&self, node_type: &str) -> Result<Option<&[usize]>> {
        Ok(self.labels[self.schema.type_index(node_type)?].as_deref())
    }

    pub fn labels_at(&self, t: usize) -> Option<&[usize]> {
        self.labels[t].as_deref()
    }

    /// True when there is more than one node type or more than one relation.
    pub fn is_heterogeneous(&self) -> bool {
        self.schema.node_types.len() > 1 || self.schema.relations.len() > 1
    }

    pub fn num_nodes(&self) -> usize {
        self.schema.node_types.iter().map(|t| t.count).sum()
    }

    /// In- or out-degree per node of the relation's endpoint type, counting
    /// multiplicity.
    pub fn degrees(&self, relation: &str, direction: Direction) -> Result<Vec<u64>> {
        let adj = self.adjacency(relation)?;
        Ok(match direction {
            Direction::In => adj.row_sums(),
            Direction::Out => adj.col_sums(),
        })
    }

    /// Same graph with one relation's adjacency replaced. Used to strip
    /// held-out edges for link prediction.
    pub fn with_adjacency(&self, relation: &str, adjacency: CsrMatrix) -> Result<HeteroGraph> {
        let k = self.schema.relation_index(relation)?;
        let old = &self.adjacency[k];
        if old.nrows() != adjacency.nrows() || old.ncols() != adjacency.ncols() {
            return Err(Error::ShapeMismatch {
                what: format!("adjacency of `{relation}`"),
                expected: format!("{}x{}", old.nrows(), old.ncols()),
                got: format!("{}x{}", adjacency.nrows(), adjacency.ncols()),
            });
        }
        let mut g = self.clone();
        g.adjacency[k] = adjacency;
        Ok(g)
    }
}

/// Incremental constructor for [`HeteroGraph`]; all validation happens in
/// [`GraphBuilder::build`].
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    edges: HashMap<String, Vec<Edge>>,
    features: HashMap<String, Array2<f64>>,
    labels: HashMap<String, Vec<usize>>,
}

impl GraphBuilder {
    pub fn node_type(mut self, name: &str, count: usize, feature_dim: usize) -> Self {
        self.node_types.push(NodeType::new(name, count, feature_dim));
        self
    }

    pub fn relation(mut self, name: &str, src: &str, dst: &str) -> Self {
        self.relations.push(Relation::new(name, src, dst));
        self
    }

    pub fn edges<E: Into<Edge>>(mut self, relation: &str, edges: impl IntoIterator<Item = E>) -> Self {
        self.edges
            .entry(relation.to_string())
            .or_default()
            .extend(edges.into_iter().map(Into::into));
        self
    }

    pub fn features(mut self, node_type: &str, features: Array2<f64>) -> Self {
        self.features.insert(node_type.to_string(), features);
        self
    }

    pub fn labels(mut self, node_type: &str, labels: Vec<usize>) -> Self {
        self.labels.insert(node_type.to_string(), labels);
        self
    }

    pub fn build(self) -> Result<HeteroGraph> {
        build_graph(
            self.node_types,
            self.relations,
            self.edges,
            self.features,
            self.labels,
        )
    }
}

/// Validates the parts and assembles an immutable graph.
///
/// Every declared relation gets an adjacency matrix, empty when no edges were
/// supplied. Feature tables are required for types with `feature_dim > 0` and
/// rejected for featureless types.
pub fn build_graph(
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    mut edges: HashMap<String, Vec<Edge>>,
    mut features: HashMap<String, Array2<f64>>,
    mut labels: HashMap<String, Vec<usize>>,
) -> Result<HeteroGraph> {
    let schema = Schema {
        node_types,
        relations,
    };
    for (i, t) in schema.node_types.iter().enumerate() {
        if schema.node_types[..i].iter().any(|o| o.name == t.name) {
            return Err(Error::Duplicate {
                kind: "node type",
                name: t.name.clone(),
            });
        }
    }
    for (i, r) in schema.relations.iter().enumerate() {
        // Relation names are the handle used by meta-paths and edge files.
        if schema.relations[..i].iter().any(|o| o.name == r.name) {
            return Err(Error::Duplicate {
                kind: "relation",
                name: r.name.clone(),
            });
        }
        schema.type_index(&r.src_type)?;
        schema.type_index(&r.dst_type)?;
    }
    if let Some(name) = edges.keys().find(|k| schema.relation_index(k).is_err()) {
        return Err(Error::UnknownRelation(name.clone()));
    }
    for name in features.keys().chain(labels.keys()) {
        schema.type_index(name)?;
    }

    let mut adjacency = Vec::with_capacity(schema.relations.len());
    for r in &schema.relations {
        let src = &schema.node_types[schema.type_index(&r.src_type)?];
        let dst = &schema.node_types[schema.type_index(&r.dst_type)?];
        let list = edges.remove(&r.name).unwrap_or_default();
        let mut triplets = Vec::with_capacity(list.len());
        for (i, e) in list.iter().enumerate() {
            for (side, id, t) in [("source", e.src, src), ("destination", e.dst, dst)] {
                if id >= t.count {
                    return Err(Error::NodeOutOfRange {
                        relation: r.name.clone(),
                        edge: i,
                        side,
                        id,
                        node_type: t.name.clone(),
                        count: t.count,
                    });
                }
            }
            triplets.push((e.dst, e.src, e.count));
        }
        adjacency.push(CsrMatrix::from_triplets(dst.count, src.count, &triplets));
    }

    let mut feature_tables = Vec::with_capacity(schema.node_types.len());
    let mut label_vecs = Vec::with_capacity(schema.node_types.len());
    for t in &schema.node_types {
        let table = features.remove(&t.name);
        match (&table, t.feature_dim) {
            (None, 0) => {}
            (None, d) => {
                return Err(Error::ShapeMismatch {
                    what: format!("features of `{}`", t.name),
                    expected: format!("{}x{}", t.count, d),
                    got: "nothing".into(),
                })
            }
            (Some(m), d) if m.dim() != (t.count, d) || d == 0 => {
                return Err(Error::ShapeMismatch {
                    what: format!("features of `{}`", t.name),
                    expected: format!("{}x{}", t.count, d),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                })
            }
            _ => {}
        }
        feature_tables.push(table);

        let lab = labels.remove(&t.name);
        if let Some(l) = &lab {
            if l.len() != t.count {
                return Err(Error::ShapeMismatch {
                    what: format!("labels of `{}`", t.name),
                    expected: t.count.to_string(),
                    got: l.len().to_string(),
                });
            }
        }
        label_vecs.push(lab);
    }

    Ok(HeteroGraph {
        schema,
        adjacency,
        features: feature_tables,
        labels: label_vecs,
    })
}

/// The three-type academic example: papers, authors and conferences with
/// written / written-by / published / publishes relations.
pub fn academic_example() -> HeteroGraph {
    HeteroGraph::builder()
        .node_type("P", 3, 0)
        .node_type("A", 2, 0)
        .node_type("C", 2, 0)
        .relation("written", "A", "P")
        .relation("written_by", "P", "A")
        .relation("published", "P", "C")
        .relation("publishes", "C", "P")
        .edges("written", [(0, 0), (0, 1), (1, 1), (1, 2)])
        .edges("written_by", [(0, 0), (1, 0), (1, 1), (2, 1)])
        .edges("published", [(0, 0), (1, 0), (2, 1)])
        .edges("publishes", [(0, 0), (0, 1), (1, 2)])
        .build()
        .expect("example graph is valid")
}
