use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::designspace::derive_seed;
use crate::error::{Error, Result};
use crate::hgraph::HeteroGraph;

/// Fraction of items held out for validation.
pub const VALID_FRACTION: f64 = 0.2;

/// Default number of random splits per configuration.
pub const DEFAULT_SPLITS: usize = 3;

/// Minimum labeled nodes per class for node classification.
pub const MIN_PER_CLASS: usize = 5;

/// Train/validation partition of a task's items: target-node indices for
/// node classification, indices into [`positive_edges`] for link
/// prediction. Both lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub id: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Distinct `(src, dst)` pairs of `relation`, ordered by destination then
/// source.
pub fn positive_edges(g: &HeteroGraph, relation: &str) -> Result<Vec<(usize, usize)>> {
    Ok(g.adjacency(relation)?.iter().map(|(dst, src, _)| (src, dst)).collect())
}

fn labeled_items(task: &Task, g: &HeteroGraph) -> Result<usize> {
    match task {
        Task::NodeClassification { target, num_classes } => {
            let labels = g.labels(target)?.ok_or_else(|| Error::MissingLabels(target.clone()))?;
            let mut per_class = vec![0usize; *num_classes];
            for &y in labels {
                *per_class.get_mut(y).ok_or_else(|| {
                    Error::TooFewLabels(format!("label {y} of `{target}` exceeds {num_classes} classes"))
                })? += 1;
            }
            if let Some((c, &n)) = per_class.iter().enumerate().find(|(_, &n)| n < MIN_PER_CLASS) {
                return Err(Error::TooFewLabels(format!(
                    "class {c} of `{target}` has {n} labeled nodes, need {MIN_PER_CLASS}"
                )));
            }
            Ok(labels.len())
        }
        Task::LinkPrediction { relation } => {
            let n = g.adjacency(relation)?.nnz();
            if n < MIN_PER_CLASS {
                return Err(Error::TooFewLabels(format!(
                    "relation `{relation}` has {n} edges, need {MIN_PER_CLASS}"
                )));
            }
            Ok(n)
        }
    }
}

/// `n_splits` random 80/20 splits; split `i` is seeded with
/// `derive_seed(seed, i)`.
pub fn make_splits(task: &Task, g: &HeteroGraph, n_splits: usize, seed: u64) -> Result<Vec<Split>> {
    let n = labeled_items(task, g)?;
    let n_valid = ((n as f64 * VALID_FRACTION).round() as usize).clamp(1, n - 1);
    Ok((0..n_splits)
        .map(|id| {
            let split_seed = derive_seed(seed, id as u64);
            let mut items: Vec<usize> = (0..n).collect();
            items.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
            let mut valid = items[..n_valid].to_vec();
            let mut train = items[n_valid..].to_vec();
            valid.sort_unstable();
            train.sort_unstable();
            Split {
                id,
                seed: split_seed,
                train,
                valid,
            }
        })
        .collect())
}

/// The graph a link-prediction model may see: held-out pairs are removed
/// from `relation` and, transposed, from every other relation running the
/// opposite way between the same types (a reverse relation would
/// otherwise leak them).
pub fn training_graph(g: &HeteroGraph, relation: &str, held_out: &[(usize, usize)]) -> Result<HeteroGraph> {
    let rel = g.relation(relation)?.clone();
    // adjacency entries are (row = dst, col = src)
    let forward: HashSet<(usize, usize)> = held_out.iter().map(|&(s, d)| (d, s)).collect();
    let reverse: HashSet<(usize, usize)> = held_out.iter().copied().collect();
    let mut out = g.with_adjacency(relation, g.adjacency(relation)?.without_entries(&forward))?;
    for other in g.relations() {
        if other.name != rel.name && other.src_type == rel.dst_type && other.dst_type == rel.src_type {
            let stripped = g.adjacency(&other.name)?.without_entries(&reverse);
            out = out.with_adjacency(&other.name, stripped)?;
        }
    }
    Ok(out)
}

/// `k` corrupted pairs per positive: the source is kept and the destination
/// drawn uniformly among nodes not linked from it in `g`.
pub fn negative_sample(
    g: &HeteroGraph,
    relation: &str,
    positives: &[(usize, usize)],
    k: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::Config(vec!["negative_sample: k must be at least 1".into()]));
    }
    let rel = g.relation(relation)?;
    let n_dst = g.node_type(&rel.dst_type)?.count;
    let adj = g.adjacency(relation)?;
    let n_src = adj.ncols();
    let mut linked: Vec<Vec<usize>> = vec![Vec::new(); n_src];
    for (d, s, _) in adj.iter() {
        linked[s].push(d);
    }
    for l in &mut linked {
        l.sort_unstable();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(positives.len() * k);
    let mut dense_cache: Vec<Option<Vec<usize>>> = vec![None; n_src];
    for &(s, _) in positives {
        if s >= n_src {
            return Err(Error::shape("negative_sample", format!("source {s} out of range for {n_src} nodes")));
        }
        let taken = &linked[s];
        if taken.len() >= n_dst {
            return Err(Error::Saturated(relation.to_string()));
        }
        for _ in 0..k {
            let d = if taken.len() * 2 <= n_dst {
                loop {
                    let d = rng.random_range(0..n_dst);
                    if taken.binary_search(&d).is_err() {
                        break d;
                    }
                }
            } else {
                let free = dense_cache[s]
                    .get_or_insert_with(|| (0..n_dst).filter(|d| taken.binary_search(d).is_err()).collect());
                free[rng.random_range(0..free.len())]
            };
            out.push((s, d));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgraph::Edge;

    fn bipartite(edges: &[(usize, usize)], n_src: usize, n_dst: usize) -> HeteroGraph {
        HeteroGraph::builder()
            .node_type("u", n_src, 0)
            .node_type("i", n_dst, 0)
            .relation("likes", "u", "i")
            .edges("likes", edges.iter().map(|&(s, d)| Edge::new(s, d)))
            .build()
            .unwrap()
    }

    #[test]
    fn negatives_avoid_positives() {
        let pos: Vec<(usize, usize)> = (0..10).map(|i| (i, i)).collect();
        let g = bipartite(&pos, 10, 10);
        let neg = negative_sample(&g, "likes", &pos, 1, 3).unwrap();
        assert_eq!(neg.len(), 10);
        let set: HashSet<_> = pos.iter().collect();
        assert!(neg.iter().all(|p| !set.contains(p)));
        assert_eq!(neg, negative_sample(&g, "likes", &pos, 1, 3).unwrap());
    }

    #[test]
    fn complete_bipartite_saturates() {
        let pos: Vec<(usize, usize)> = (0..3).flat_map(|s| (0..4).map(move |d| (s, d))).collect();
        let g = bipartite(&pos, 3, 4);
        assert!(matches!(negative_sample(&g, "likes", &pos, 1, 0), Err(Error::Saturated(_))));
    }
}
