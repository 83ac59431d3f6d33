use super::Subgraph;
use crate::error::{Error, Result};
use crate::hgraph::HeteroGraph;

/// Average fraction of a node's subgraph neighbours that share its label.
///
/// The adjacency is binarized and the neighbours of `v` are the nodes `u`
/// with an edge `u -> v`. A node is never its own neighbour: the diagonal that
/// symmetric meta-paths such as `P-A-P` always produce is ignored. Nodes
/// without neighbours are left out of the average, since their fraction is
/// 0/0.
pub fn homophily(sub: &Subgraph, labels: &[usize]) -> Result<f64> {
    if !sub.is_square() {
        return Err(Error::NotSquare {
            src: sub.src_type.clone(),
            dst: sub.dst_type.clone(),
        });
    }
    let adj = &sub.adjacency;
    if labels.len() != adj.nrows() {
        return Err(Error::ShapeMismatch {
            what: format!("labels of `{}`", sub.dst_type),
            expected: adj.nrows().to_string(),
            got: labels.len().to_string(),
        });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..adj.nrows() {
        let (mut same, mut all) = (0usize, 0usize);
        for (u, _) in adj.row(v).filter(|&(u, _)| u != v) {
            all += 1;
            if labels[u] == labels[v] {
                same += 1;
            }
        }
        if all > 0 {
            total += same as f64 / all as f64;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric(format!(
            "homophily of `{}`: no node has a neighbour",
            sub.origin.name()
        )));
    }
    Ok(total / counted as f64)
}

/// [`homophily`] with labels looked up in `g`.
pub fn homophily_of(g: &HeteroGraph, sub: &Subgraph) -> Result<f64> {
    let labels = g
        .labels(&sub.dst_type)?
        .ok_or_else(|| Error::MissingLabels(sub.dst_type.clone()))?;
    homophily(sub, labels)
}
