use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgraph::Schema;

/// What a trial learns and how it is scored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    NodeClassification { target: String, num_classes: usize },
    LinkPrediction { relation: String },
}

impl Task {
    pub fn node_classification(target: impl Into<String>, num_classes: usize) -> Self {
        Task::NodeClassification {
            target: target.into(),
            num_classes,
        }
    }

    pub fn link_prediction(relation: impl Into<String>) -> Self {
        Task::LinkPrediction {
            relation: relation.into(),
        }
    }

    /// Name of the primary validation metric.
    pub fn metric(&self) -> &'static str {
        match self {
            Task::NodeClassification { .. } => "macro_f1",
            Task::LinkPrediction { .. } => "roc_auc",
        }
    }

    /// Node types whose representations the task head reads, as schema
    /// indices (source first for link prediction).
    pub fn output_types(&self, schema: &Schema) -> Result<Vec<usize>> {
        match self {
            Task::NodeClassification { target, .. } => Ok(vec![schema.type_index(target)?]),
            Task::LinkPrediction { relation } => {
                let r = schema.relation(relation)?;
                Ok(vec![schema.type_index(&r.src_type)?, schema.type_index(&r.dst_type)?])
            }
        }
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        if let Task::NodeClassification { num_classes, target } = self {
            if *num_classes < 2 {
                return Err(Error::Config(vec![format!(
                    "task: node classification on `{target}` needs at least 2 classes"
                )]));
            }
        }
        self.output_types(schema).map(|_| ())
    }
}

/// `nc:<type>:<classes>` or `lp:<relation>`.
impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::NodeClassification { target, num_classes } => write!(f, "nc:{target}:{num_classes}"),
            Task::LinkPrediction { relation } => write!(f, "lp:{relation}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(vec![format!("task `{s}`: expected nc:<type>:<classes> or lp:<relation>")]);
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["nc", target, k] if !target.is_empty() => Ok(Task::node_classification(
                *target,
                k.parse().map_err(|_| bad())?,
            )),
            ["lp", rel] if !rel.is_empty() => Ok(Task::link_prediction(*rel)),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_tokens_round_trip() {
        for t in [Task::node_classification("paper", 4), Task::link_prediction("writes")] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("nc:paper".parse::<Task>().is_err());
        assert!("xx:paper".parse::<Task>().is_err());
    }
}
