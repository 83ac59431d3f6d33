use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    // graph construction and ingestion
    #[error("unknown node type `{0}`")]
    UnknownType(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("relation `{relation}`: edge #{edge} has {side} id {id} but type `{node_type}` has {count} nodes")]
    NodeOutOfRange {
        relation: String,
        edge: usize,
        side: &'static str,
        id: usize,
        node_type: String,
        count: usize,
    },
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: String,
        expected: String,
        got: String,
    },
    #[error("bundle {path}: {message}")]
    Bundle { path: PathBuf, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    // transformations
    #[error("meta-path `{metapath}` does not chain: `{left}` ends at `{left_dst}` but `{right}` starts at `{right_src}`")]
    MetaPathChain {
        metapath: String,
        left: String,
        left_dst: String,
        right: String,
        right_src: String,
    },
    #[error("meta-path `{0}` is empty")]
    EmptyMetaPath(String),
    #[error("path count overflow while composing `{0}`")]
    Overflow(String),
    #[error("homophily needs a square subgraph, got {src} -> {dst}")]
    NotSquare { src: String, dst: String },
    #[error("missing labels for node type `{0}`")]
    MissingLabels(String),

    // tensors
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: segment index {index} out of range for {segments} segments")]
    SegmentIndex {
        op: &'static str,
        index: usize,
        segments: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("tape already consumed by a previous backward pass")]
    BackwardTwice,

    // design space / configuration
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("infeasible strata: {required} required hits exceed sample size {n}")]
    Infeasible { required: usize, n: usize },
    #[error("dimension `{dim}` does not apply: {reason}")]
    Inapplicable { dim: String, reason: String },

    // training
    #[error("too few labeled items: {0}")]
    TooFewLabels(String),
    #[error("relation `{0}` is saturated: no negative destination exists")]
    Saturated(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    // runner / analysis
    #[error("plan: {0}")]
    Plan(String),
    #[error("results file was produced by plan {found}, expected {expected}")]
    PlanHashMismatch { expected: String, found: String },
    #[error("analysis: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn bundle(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Bundle {
            path: path.into(),
            message: message.into(),
        }
    }
}
