mod common;

use std::collections::HashSet;

use common::random_homogeneous;
use hgnn_space::hgraph::{generate_synthetic, HeteroGraph, SyntheticSpec};
use hgnn_space::model::DesignConfig;
use hgnn_space::train::{
    macro_f1, make_splits, micro_f1, mrr, negative_sample, positive_edges, roc_auc, train_trial, training_graph,
    RankGroup, Status, Task,
};
use hgnn_space::Error;
use proptest::prelude::*;

fn small_academic() -> HeteroGraph {
    let mut spec = SyntheticSpec::academic(60, 40, 3, 0.9, 2);
    spec.relations[0].edges = 240;
    generate_synthetic(&spec).unwrap()
}

fn quick(cfg: &mut DesignConfig) {
    cfg.epochs = 5;
    cfg.hidden = 8;
    cfg.mp_layers = 1;
}

#[test]
fn splits_are_eighty_twenty_disjoint_and_deterministic() {
    let g = small_academic();
    let task = Task::node_classification("paper", 3);
    let a = make_splits(&task, &g, 3, 5).unwrap();
    let b = make_splits(&task, &g, 3, 5).unwrap();
    assert_eq!(a, b);
    for s in &a {
        assert_eq!(s.valid.len(), 12);
        assert_eq!(s.train.len(), 48);
        let v: HashSet<_> = s.valid.iter().collect();
        assert!(s.train.iter().all(|i| !v.contains(i)));
    }
    assert_ne!(a[0].valid, a[1].valid);
    assert_ne!(make_splits(&task, &g, 1, 6).unwrap()[0].valid, a[0].valid);
}

#[test]
fn too_few_labels_per_class_are_rejected() {
    let g = small_academic();
    assert!(matches!(
        make_splits(&Task::node_classification("paper", 20), &g, 1, 0),
        Err(Error::TooFewLabels(_))
    ));
    assert!(matches!(
        make_splits(&Task::node_classification("author", 3), &g, 1, 0),
        Err(Error::MissingLabels(_))
    ));
}

#[test]
fn link_training_graph_hides_validation_edges_both_ways() {
    let g = small_academic();
    let task = Task::link_prediction("writes");
    let split = &make_splits(&task, &g, 1, 3).unwrap()[0];
    let pos = positive_edges(&g, "writes").unwrap();
    let held: Vec<(usize, usize)> = split.valid.iter().map(|&i| pos[i]).collect();
    let observed = training_graph(&g, "writes", &held).unwrap();
    let fwd = observed.adjacency("writes").unwrap();
    let rev = observed.adjacency("written_by").unwrap();
    for &(a, p) in &held {
        assert_eq!(fwd.get(p, a), 0, "writes {a}->{p} leaked");
        assert_eq!(rev.get(a, p), 0, "written_by {p}->{a} leaked");
    }
    for &i in &split.train {
        let (a, p) = pos[i];
        assert!(fwd.get(p, a) > 0);
    }
}

#[test]
fn negatives_are_never_positives() {
    let g = random_homogeneous(4, 30, 90, 2);
    let pos = positive_edges(&g, "e").unwrap();
    let known: HashSet<_> = pos.iter().copied().collect();
    let neg = negative_sample(&g, "e", &pos, 3, 8).unwrap();
    assert_eq!(neg.len(), 3 * pos.len());
    assert!(neg.iter().all(|p| !known.contains(p)));
    assert_eq!(neg, negative_sample(&g, "e", &pos, 3, 8).unwrap());
}

#[test]
fn metric_edge_cases() {
    assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
    assert_eq!(micro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
    assert_eq!(roc_auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
    assert!(matches!(roc_auc(&[0.1, 0.9], &[true, true]), Err(Error::UndefinedMetric(_))));
    let groups = [
        RankGroup { positive: 0.9, negatives: vec![0.1, 0.2] },
        RankGroup { positive: 0.3, negatives: vec![0.5, 0.1] },
    ];
    assert_eq!(mrr(&groups).unwrap(), 0.75);
}

#[test]
fn trials_reproduce_bit_for_bit() {
    let g = small_academic();
    let task = Task::node_classification("paper", 3);
    let split = &make_splits(&task, &g, 1, 1).unwrap()[0];
    let mut cfg = DesignConfig::rgcn(task);
    quick(&mut cfg);
    cfg.dropout = 0.3;
    cfg.bn = true;
    cfg.seed = 42;
    let a = train_trial(&cfg, &g, split).unwrap();
    let b = train_trial(&cfg, &g, split).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.status, Status::Ok);
    assert_eq!(a.history.len(), cfg.epochs + 1);
    cfg.seed = 43;
    assert_ne!(train_trial(&cfg, &g, split).unwrap().history, a.history);
}

#[test]
fn zero_epochs_reports_the_initial_model() {
    let g = small_academic();
    let task = Task::node_classification("paper", 3);
    let split = &make_splits(&task, &g, 1, 1).unwrap()[0];
    let mut cfg = DesignConfig::rgcn(task);
    quick(&mut cfg);
    cfg.epochs = 0;
    let r = train_trial(&cfg, &g, split).unwrap();
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.best_epoch, Some(0));
}

#[test]
fn link_prediction_trial_reports_auc_and_mrr() {
    let g = small_academic();
    let task = Task::link_prediction("writes");
    let split = &make_splits(&task, &g, 1, 1).unwrap()[0];
    let mut cfg = DesignConfig::rgcn(task);
    quick(&mut cfg);
    let r = train_trial(&cfg, &g, split).unwrap();
    assert_eq!(r.status, Status::Ok, "{:?}", r.error);
    assert_eq!(r.metric, "roc_auc");
    assert!(r.metrics.contains_key("roc_auc") && r.metrics.contains_key("mrr"));
    let auc = r.best_score.unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn best_epoch_is_the_first_maximum() {
    let g = small_academic();
    let task = Task::node_classification("paper", 3);
    let split = &make_splits(&task, &g, 1, 1).unwrap()[0];
    let mut cfg = DesignConfig::rgcn(task);
    quick(&mut cfg);
    cfg.epochs = 8;
    let r = train_trial(&cfg, &g, split).unwrap();
    let best = r.best_score.unwrap();
    let first = r.history.iter().position(|h| *h == Some(best)).unwrap();
    assert_eq!(r.best_epoch, Some(first));
    assert!(r.history.iter().flatten().all(|&h| h <= best));
}

proptest! {
    #[test]
    fn f1_ignores_sample_order(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), rot in 0usize..60) {
        let (p, l): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let k = rot % pairs.len();
        let (mut p2, mut l2) = (p.clone(), l.clone());
        p2.rotate_left(k);
        l2.rotate_left(k);
        prop_assert!((macro_f1(&p, &l).unwrap() - macro_f1(&p2, &l2).unwrap()).abs() < 1e-12);
        prop_assert!((micro_f1(&p, &l).unwrap() - micro_f1(&p2, &l2).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        items in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..50)
    ) {
        let (s, y): (Vec<f64>, Vec<bool>) = items.iter().copied().unzip();
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let mapped: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 1.0).collect();
        let a = roc_auc(&s, &y).unwrap();
        prop_assert!((a - roc_auc(&mapped, &y).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((a + roc_auc(&flipped, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}
