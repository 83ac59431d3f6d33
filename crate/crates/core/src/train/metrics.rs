//! Classification and ranking metrics. Higher is better for all of them.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

fn check_pair_lengths(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            what: what.into(),
            expected: format!("{a} labels"),
            got: b.to_string(),
        });
    }
    if a == 0 {
        return Err(Error::UndefinedMetric(format!("{what} of an empty input")));
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over every class that occurs in either
/// `preds` or `labels`.
pub fn macro_f1(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair_lengths("macro_f1", labels.len(), preds.len())?;
    let classes: BTreeSet<usize> = preds.iter().chain(labels).copied().collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (&p, &y) in preds.iter().zip(labels) {
                match (p == c, y == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Pooled F1, which for single-label classification equals accuracy.
pub fn micro_f1(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair_lengths("micro_f1", labels.len(), preds.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// the midpoint of their ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_pair_lengths("roc_auc", labels.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("roc_auc with NaN scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both positive and negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// One positive score and the scores of its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct RankGroup {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

/// Mean reciprocal rank of each group's positive. A negative scoring equal
/// to the positive ranks ahead of it.
pub fn mrr(groups: &[RankGroup]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::UndefinedMetric("mrr of no groups".into()));
    }
    let total: f64 = groups
        .iter()
        .map(|g| {
            if g.positive.is_nan() || g.negatives.iter().any(|s| s.is_nan()) {
                return Err(Error::UndefinedMetric("mrr with NaN scores".into()));
            }
            let rank = 1 + g.negatives.iter().filter(|&&s| s >= g.positive).count();
            Ok(1.0 / rank as f64)
        })
        .sum::<Result<f64>>()?;
    Ok(total / groups.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        assert_eq!(macro_f1(&y, &y).unwrap(), 1.0);
        assert_eq!(micro_f1(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn macro_f1_hand_example() {
        // class 0: tp 1 fp 0 fn 1 -> 2/3; class 1: tp 1 fp 1 fn 0 -> 2/3
        let f = macro_f1(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_with_ties_and_separation() {
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn mrr_ranks_one_two_four() {
        let groups = [
            RankGroup { positive: 0.9, negatives: vec![0.1, 0.2, 0.3] },
            RankGroup { positive: 0.5, negatives: vec![0.6, 0.2, 0.3] },
            RankGroup { positive: 0.5, negatives: vec![0.7, 0.6, 0.5, 0.1] },
        ];
        assert!((mrr(&groups).unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }
}
