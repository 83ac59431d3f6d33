use std::collections::BTreeMap;
use std::fs;

use hgnn_space::analysis::{average_ranks, edf, edf_csv, emit_report, rank_choices, ranking_csv, ranking_svg};
use hgnn_space::train::{Status, TrialRecord, RECORD_FORMAT};
use hgnn_space::Error;
use proptest::prelude::*;

fn record(split: usize, cfg: &[(&str, &str)], score: Option<f64>) -> TrialRecord {
    TrialRecord {
        format: RECORD_FORMAT,
        trial: 0,
        config_id: 0,
        split,
        seed: 0,
        config: cfg.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        status: if score.is_some() { Status::Ok } else { Status::Failed },
        metric: "macro_f1".into(),
        best_score: score,
        best_epoch: score.map(|_| 0),
        metrics: BTreeMap::new(),
        history: Vec::new(),
        num_parameters: 0,
        error: None,
    }
}

/// One setup per (hidden, split) with a choice for each `bn` token.
fn bn_records(scores: &[(&str, usize, f64, f64)]) -> Vec<TrialRecord> {
    scores
        .iter()
        .flat_map(|&(hidden, split, t, f)| {
            [
                record(split, &[("bn", "True"), ("hidden", hidden)], Some(t)),
                record(split, &[("bn", "False"), ("hidden", hidden)], Some(f)),
            ]
        })
        .collect()
}

fn avg(table: &hgnn_space::analysis::RankingTable, choice: &str) -> f64 {
    table.choices.iter().find(|c| c.choice == choice).unwrap().average_rank
}

#[test]
fn domination_gives_rank_one() {
    let recs = bn_records(&[("8", 0, 0.9, 0.5), ("16", 0, 0.7, 0.6), ("8", 1, 0.8, 0.1)]);
    let t = rank_choices(&recs, "bn").unwrap();
    assert_eq!(t.setups, 3);
    assert_eq!(t.choices[0].choice, "True");
    assert_eq!(avg(&t, "True"), 1.0);
    assert_eq!(avg(&t, "False"), 2.0);
}

#[test]
fn opposite_orders_average_out() {
    let recs = bn_records(&[("8", 0, 0.9, 0.5), ("16", 0, 0.5, 0.9)]);
    let t = rank_choices(&recs, "bn").unwrap();
    assert_eq!((avg(&t, "True"), avg(&t, "False")), (1.5, 1.5));
}

#[test]
fn ties_share_the_mean_position() {
    assert_eq!(average_ranks(&[Some(0.9), Some(0.7), Some(0.7)]), vec![1.0, 2.5, 2.5]);
}

#[test]
fn failed_trials_rank_last() {
    let recs = vec![
        record(0, &[("bn", "True")], None),
        record(0, &[("bn", "False")], Some(0.01)),
    ];
    let t = rank_choices(&recs, "bn").unwrap();
    assert_eq!(avg(&t, "True"), 2.0);
}

#[test]
fn incomplete_setups_are_skipped_and_none_complete_is_an_error() {
    let mut recs = bn_records(&[("8", 0, 0.9, 0.5)]);
    recs.push(record(0, &[("bn", "True"), ("hidden", "32")], Some(0.3)));
    let t = rank_choices(&recs, "bn").unwrap();
    assert_eq!((t.setups, t.incomplete), (1, 1));
    let lonely = vec![record(0, &[("bn", "True"), ("hidden", "8")], Some(0.3))];
    assert!(matches!(rank_choices(&lonely, "bn"), Err(Error::Analysis(_))));
    assert!(rank_choices(&recs, "dropout").is_err());
}

#[test]
fn family_setups_ignore_the_macro_reducer() {
    let recs = vec![
        record(0, &[("model_family", "Homogenization"), ("macro", "none")], Some(0.2)),
        record(0, &[("model_family", "Relation"), ("macro", "Mean")], Some(0.9)),
        record(0, &[("model_family", "Metapath"), ("macro", "Mean")], Some(0.5)),
    ];
    let t = rank_choices(&recs, "model_family").unwrap();
    assert_eq!(t.setups, 1);
    assert_eq!(avg(&t, "Relation"), 1.0);
    assert_eq!(avg(&t, "Homogenization"), 3.0);
}

#[test]
fn report_files_are_deterministic() {
    let recs = bn_records(&[("8", 0, 0.9, 0.5), ("16", 0, 0.5, 0.9), ("8", 1, 0.3, 0.2)]);
    let t = rank_choices(&recs, "bn").unwrap();
    let csv = ranking_csv(&t);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("choice,avg_rank"));
    let curve = edf("space", &[0.2, 0.5, 0.5, 0.9]).unwrap();
    let e = edf_csv(&curve);
    let xs: Vec<f64> = e.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(xs.len(), 3);

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let f1 = emit_report(&[t.clone()], &[curve.clone()], d1.path()).unwrap();
    let f2 = emit_report(&[t.clone()], &[curve], d2.path()).unwrap();
    assert_eq!(f1.len(), 4);
    for (a, b) in f1.iter().zip(&f2) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
    assert!(ranking_svg(&t).starts_with("<svg"));
    assert!(emit_report(&[], &[], d1.path()).is_err());
}

#[test]
fn unwritable_directory_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let curve = edf("s", &[0.1]).unwrap();
    assert!(matches!(emit_report(&[], &[curve], &file), Err(Error::Analysis(_))));
}

proptest! {
    #[test]
    fn rank_sums_are_conserved(scores in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..1.0), 1..8)) {
        let ranks = average_ranks(&scores);
        let k = scores.len() as f64;
        prop_assert!((ranks.iter().sum::<f64>() - k * (k + 1.0) / 2.0).abs() < 1e-9);
        prop_assert!(ranks.iter().all(|&r| (1.0..=k).contains(&r)));
    }

    #[test]
    fn rankings_survive_monotone_transforms(
        setups in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..10)
    ) {
        let tokens = ["ReLU", "ELU", "Tanh"];
        let build = |f: &dyn Fn(f64) -> f64| -> Vec<TrialRecord> {
            setups
                .iter()
                .enumerate()
                .flat_map(|(s, row)| {
                    let h = s.to_string();
                    row.iter()
                        .zip(tokens)
                        .map(|(&v, tok)| record(0, &[("activation", tok), ("hidden", &h)], Some(f(v))))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let plain = rank_choices(&build(&|v| v), "activation").unwrap();
        let warped = rank_choices(&build(&|v| (3.0 * v).exp() - 7.0), "activation").unwrap();
        prop_assert_eq!(plain, warped);
    }

    #[test]
    fn edf_boundaries_and_right_limits(scores in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let f = edf("p", &scores).unwrap();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(f.eval(lo), 0.0);
        prop_assert_eq!(f.eval(lo - 1.0), 0.0);
        prop_assert_eq!(f.eval(hi + 1e-9), 1.0);
        for (x, at, above) in f.breakpoints() {
            prop_assert_eq!(f.eval(x), at);
            prop_assert_eq!(f.eval(x + 1e-9), above);
            prop_assert!(above > at);
        }
    }
}
