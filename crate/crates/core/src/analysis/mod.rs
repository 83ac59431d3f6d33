//! Post-hoc analysis of trial records: per-dimension choice rankings,
//! empirical distribution functions of scores, and CSV/SVG reports.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use report::{edf_csv, edf_svg, emit_report, ranking_csv, ranking_svg};

use crate::designspace::full_space;
use crate::error::{Error, Result};
use crate::train::TrialRecord;

/// Ranks one choice received across setups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRanks {
    pub choice: String,
    pub average_rank: f64,
    /// One rank per setup, in setup order.
    pub ranks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub dimension: String,
    pub choices: Vec<ChoiceRanks>,
    /// Setups holding every choice exactly once.
    pub setups: usize,
    /// Groups skipped because a choice was missing or repeated.
    pub incomplete: usize,
}

impl RankingTable {
    /// How often each choice received each rank value; ranks of tied
    /// choices are fractional.
    pub fn histogram(&self) -> (Vec<f64>, Vec<Vec<usize>>) {
        let mut values: Vec<f64> = self.choices.iter().flat_map(|c| c.ranks.iter().copied()).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let counts = self
            .choices
            .iter()
            .map(|c| values.iter().map(|v| c.ranks.iter().filter(|r| *r == v).count()).collect())
            .collect();
        (values, counts)
    }
}

/// Ranks of `scores` with 1 for the highest. `None` (a failed trial) ranks
/// after every score; equal entries share the mean of their positions.
pub fn average_ranks(scores: &[Option<f64>]) -> Vec<f64> {
    let key = |s: &Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(&scores[b]).total_cmp(&key(&scores[a])));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && key(&scores[order[j + 1]]) == key(&scores[order[i]]) {
            j += 1;
        }
        let mean = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Orders `choices` as the full design space lists them, unknown tokens
/// last in lexical order.
fn canonical_order(dimension: &str, choices: BTreeSet<String>) -> Vec<String> {
    let space = full_space();
    let reference: Vec<String> = space.dimension(dimension).map(|d| d.choices.clone()).unwrap_or_default();
    let mut out: Vec<String> = reference.iter().filter(|c| choices.contains(*c)).cloned().collect();
    out.extend(choices.into_iter().filter(|c| !reference.contains(c)));
    out
}

/// Groups records into setups (same split, same configuration apart from
/// `dimension`) and averages each choice's rank over the complete setups.
pub fn rank_choices(records: &[TrialRecord], dimension: &str) -> Result<RankingTable> {
    let mut groups: BTreeMap<(usize, Vec<(String, String)>), Vec<(String, Option<f64>)>> = BTreeMap::new();
    for r in records {
        let choice = r
            .config
            .get(dimension)
            .ok_or_else(|| Error::Analysis(format!("record {} has no dimension `{dimension}`", r.trial)))?;
        // the macro reducer follows the family, so it is not part of a family setup
        let key: Vec<(String, String)> = r
            .config
            .iter()
            .filter(|(k, _)| *k != dimension && !(dimension == "model_family" && k.as_str() == "macro"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        groups.entry((r.split, key)).or_default().push((choice.clone(), r.score()));
    }
    let all: BTreeSet<String> = groups.values().flatten().map(|(c, _)| c.clone()).collect();
    let choices = canonical_order(dimension, all);
    let mut ranks: Vec<Vec<f64>> = vec![Vec::new(); choices.len()];
    let (mut setups, mut incomplete) = (0, 0);
    for members in groups.values() {
        let mut scores = vec![None; choices.len()];
        let mut seen = vec![false; choices.len()];
        let mut ok = members.len() == choices.len();
        for (c, s) in members {
            let i = choices.iter().position(|x| x == c).expect("choice collected above");
            ok &= !seen[i];
            seen[i] = true;
            scores[i] = *s;
        }
        if !ok {
            incomplete += 1;
            continue;
        }
        setups += 1;
        for (i, r) in average_ranks(&scores).into_iter().enumerate() {
            ranks[i].push(r);
        }
    }
    if setups == 0 || choices.len() < 2 {
        return Err(Error::Analysis(format!(
            "no complete setup for dimension `{dimension}` ({} groups, {} choices)",
            groups.len(),
            choices.len()
        )));
    }
    Ok(RankingTable {
        dimension: dimension.to_string(),
        choices: choices
            .into_iter()
            .zip(ranks)
            .map(|(choice, ranks)| ChoiceRanks {
                choice,
                average_rank: ranks.iter().sum::<f64>() / ranks.len() as f64,
                ranks,
            })
            .collect(),
        setups,
        incomplete,
    })
}

/// Empirical distribution function `F(s) = #{i : s_i < s} / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdfCurve {
    pub name: String,
    sorted: Vec<f64>,
}

impl EdfCurve {
    pub fn eval(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x < s) as f64 / self.sorted.len() as f64
    }

    pub fn scores(&self) -> &[f64] {
        &self.sorted
    }

    /// Distinct scores in increasing order with `F` at the score and just
    /// above it.
    pub fn breakpoints(&self) -> Vec<(f64, f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.sorted.len() {
            let s = self.sorted[i];
            let j = self.sorted.partition_point(|&x| x <= s);
            out.push((s, i as f64 / n, j as f64 / n));
            i = j;
        }
        out
    }
}

/// The EDF of `scores`; NaN scores are rejected.
pub fn edf(name: &str, scores: &[f64]) -> Result<EdfCurve> {
    if scores.is_empty() {
        return Err(Error::Analysis(format!("edf `{name}`: no scores")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Analysis(format!("edf `{name}`: NaN score")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EdfCurve {
        name: name.to_string(),
        sorted,
    })
}

/// The EDF of every successful record's best score.
pub fn edf_of_records(name: &str, records: &[TrialRecord]) -> Result<EdfCurve> {
    let scores: Vec<f64> = records.iter().filter_map(TrialRecord::score).collect();
    edf(name, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tied_scores_share_mean_rank() {
        assert_eq!(average_ranks(&[Some(0.9), Some(0.7), Some(0.7)]), vec![1.0, 2.5, 2.5]);
        assert_eq!(average_ranks(&[None, Some(0.1), None]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn edf_strict_inequality() {
        let f = edf("x", &[0.6, 0.7, 0.9]).unwrap();
        assert!((f.eval(0.8) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval(0.6), 0.0);
        assert_eq!(f.eval(0.9), 2.0 / 3.0);
        assert_eq!(f.eval(0.91), 1.0);
        assert!(edf("x", &[]).is_err());
    }

    #[test]
    fn breakpoints_collapse_duplicates() {
        let f = edf("x", &[0.5, 0.2, 0.5]).unwrap();
        let b = f.breakpoints();
        assert_eq!(b.len(), 2);
        assert_eq!(b[1], (0.5, 1.0 / 3.0, 1.0));
    }
}
