use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{macro_f1, micro_f1, mrr, roc_auc, RankGroup};
use super::split::{negative_sample, positive_edges, training_graph, Split};
use super::{Optimizer, Task};
use crate::designspace::derive_seed;
use crate::error::{Error, Result};
use crate::hgraph::HeteroGraph;
use crate::layers::ForwardCtx;
use crate::model::{build_model, DesignConfig, Model, PreparedGraph};
use crate::tensor::{Index, Tape, Var};

/// Version of the record layout and evaluation protocol.
pub const RECORD_FORMAT: u32 = 1;

/// Negatives per positive in the link-prediction training loss.
pub const TRAIN_NEGATIVES: usize = 1;

/// Negatives per validation positive in MRR groups.
pub const MRR_NEGATIVES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Outcome of training one configuration on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub format: u32,
    /// Position in the generating plan (0 outside a plan).
    pub trial: usize,
    /// Index of the configuration within the plan.
    pub config_id: usize,
    pub split: usize,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub status: Status,
    pub metric: String,
    pub best_score: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Every metric at the best epoch.
    pub metrics: BTreeMap<String, f64>,
    /// Validation metric at initialization (entry 0) and after every epoch.
    /// `None` marks an epoch whose metric could not be computed.
    pub history: Vec<Option<f64>>,
    pub num_parameters: usize,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Best score when the trial succeeded.
    pub fn score(&self) -> Option<f64> {
        match self.status {
            Status::Ok => self.best_score,
            Status::Failed => None,
        }
    }
}

/// Everything an epoch needs that does not change between epochs.
enum Setup {
    Nc {
        labels: Arc<[usize]>,
        train: Index,
        train_labels: Index,
        valid: Vec<usize>,
    },
    Lp {
        relation: String,
        observed: HeteroGraph,
        train_pos: Vec<(usize, usize)>,
        valid_pos: Vec<(usize, usize)>,
        valid_neg: Vec<(usize, usize)>,
        mrr_neg: Vec<(usize, usize)>,
    },
}

fn index(v: impl IntoIterator<Item = usize>) -> Index {
    v.into_iter().collect::<Vec<_>>().into()
}

fn argmax_rows(m: &crate::tensor::Matrix) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

struct Trainer<'a> {
    cfg: &'a DesignConfig,
    model: Model,
    graph: PreparedGraph,
    setup: Setup,
    split_seed: u64,
}

impl Trainer<'_> {
    fn new<'a>(cfg: &'a DesignConfig, g: &HeteroGraph, split: &Split) -> Result<Trainer<'a>> {
        let model = build_model(cfg, g.schema())?;
        let (graph, setup) = match &cfg.task {
            Task::NodeClassification { target, .. } => {
                let labels: Arc<[usize]> = g.labels(target)?.ok_or_else(|| Error::MissingLabels(target.clone()))?.into();
                let setup = Setup::Nc {
                    train: index(split.train.iter().copied()),
                    train_labels: index(split.train.iter().map(|&i| labels[i])),
                    valid: split.valid.clone(),
                    labels,
                };
                (model.prepare(g)?, setup)
            }
            Task::LinkPrediction { relation } => {
                let all = positive_edges(g, relation)?;
                let pick = |ids: &[usize]| ids.iter().map(|&i| all[i]).collect::<Vec<_>>();
                let (train_pos, valid_pos) = (pick(&split.train), pick(&split.valid));
                let valid_neg = negative_sample(g, relation, &valid_pos, 1, derive_seed(split.seed, 1))?;
                let mrr_neg = negative_sample(g, relation, &valid_pos, MRR_NEGATIVES, derive_seed(split.seed, 2))?;
                let train_graph = training_graph(g, relation, &valid_pos)?;
                let setup = Setup::Lp {
                    relation: relation.clone(),
                    observed: g.clone(),
                    train_pos,
                    valid_pos,
                    valid_neg,
                    mrr_neg,
                };
                (model.prepare(&train_graph)?, setup)
            }
        };
        Ok(Trainer {
            cfg,
            model,
            graph,
            setup,
            split_seed: split.seed,
        })
    }

    fn link_logits(&self, tape: &mut Tape, h: &[Var], pairs: &[(usize, usize)]) -> Result<Var> {
        let src = index(pairs.iter().map(|p| p.0));
        let dst = index(pairs.iter().map(|p| p.1));
        self.model.link_logits(tape, h[0], h[1], &src, &dst)
    }

    /// One full-graph gradient step; returns the training loss.
    fn step(&mut self, opt: &mut Optimizer, epoch: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let stream = derive_seed(self.cfg.seed ^ self.split_seed.rotate_left(17), epoch as u64);
        let mut ctx = ForwardCtx::train(stream);
        let h = self.model.forward(&mut tape, &self.graph, &mut ctx)?;
        let loss = match &self.setup {
            Setup::Nc { train, train_labels, .. } => {
                let logits = self.model.logits(&mut tape, h[0])?;
                let rows = tape.gather_rows(logits, train)?;
                let logp = tape.log_softmax(rows);
                let picked = tape.pick(logp, train_labels)?;
                let mean = tape.mean(picked);
                tape.scale(mean, -1.0)
            }
            Setup::Lp {
                relation,
                observed,
                train_pos,
                ..
            } => {
                let neg_pairs = negative_sample(observed, relation, train_pos, TRAIN_NEGATIVES, stream)?;
                let pos = self.link_logits(&mut tape, &h, train_pos)?;
                let neg = self.link_logits(&mut tape, &h, &neg_pairs)?;
                // binary cross-entropy: softplus(-z) for positives, softplus(z) for negatives
                let flipped = tape.scale(pos, -1.0);
                let all = tape.concat(&[flipped, neg], 0)?;
                let terms = tape.softplus(all);
                tape.mean(terms)
            }
        };
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Ok(value);
        }
        self.model.store.zero_grad();
        tape.backward(loss, &mut self.model.store)?;
        opt.step(&mut self.model.store);
        Ok(value)
    }

    /// Validation metrics in eval mode, primary metric first.
    fn evaluate(&mut self) -> Result<Vec<(&'static str, f64)>> {
        let mut tape = Tape::new();
        let h = self.model.forward(&mut tape, &self.graph, &mut ForwardCtx::eval())?;
        match &self.setup {
            Setup::Nc { labels, valid, .. } => {
                let logits = self.model.logits(&mut tape, h[0])?;
                let values = tape.value(logits);
                if !values.iter().all(|v| v.is_finite()) {
                    return Err(Error::UndefinedMetric("non-finite logits".into()));
                }
                let preds = argmax_rows(values);
                let p: Vec<usize> = valid.iter().map(|&i| preds[i]).collect();
                let y: Vec<usize> = valid.iter().map(|&i| labels[i]).collect();
                Ok(vec![("macro_f1", macro_f1(&p, &y)?), ("micro_f1", micro_f1(&p, &y)?)])
            }
            Setup::Lp {
                valid_pos,
                valid_neg,
                mrr_neg,
                ..
            } => {
                let pos = self.link_logits(&mut tape, &h, valid_pos)?;
                let neg = self.link_logits(&mut tape, &h, valid_neg)?;
                let groups_neg = self.link_logits(&mut tape, &h, mrr_neg)?;
                let pos: Vec<f64> = tape.value(pos).iter().copied().collect();
                let neg: Vec<f64> = tape.value(neg).iter().copied().collect();
                let groups_neg: Vec<f64> = tape.value(groups_neg).iter().copied().collect();
                if pos.iter().chain(&neg).chain(&groups_neg).any(|v| !v.is_finite()) {
                    return Err(Error::UndefinedMetric("non-finite link scores".into()));
                }
                let scores: Vec<f64> = pos.iter().chain(&neg).copied().collect();
                let labels: Vec<bool> = (0..scores.len()).map(|i| i < pos.len()).collect();
                let groups: Vec<RankGroup> = pos
                    .iter()
                    .zip(groups_neg.chunks(MRR_NEGATIVES))
                    .map(|(&p, n)| RankGroup {
                        positive: p,
                        negatives: n.to_vec(),
                    })
                    .collect();
                Ok(vec![("roc_auc", roc_auc(&scores, &labels)?), ("mrr", mrr(&groups)?)])
            }
        }
    }
}

/// Trains `cfg` on `g` with full-graph gradient steps for `cfg.epochs`
/// epochs and keeps the epoch with the best validation metric.
///
/// Divergence (a non-finite loss or metric) marks the trial failed; the
/// record is still returned. Errors are reserved for configurations that
/// cannot be built or splits that do not fit the graph.
pub fn train_trial(cfg: &DesignConfig, g: &HeteroGraph, split: &Split) -> Result<TrialRecord> {
    let mut trainer = Trainer::new(cfg, g, split)?;
    let mut record = TrialRecord {
        format: RECORD_FORMAT,
        trial: 0,
        config_id: 0,
        split: split.id,
        seed: cfg.seed,
        config: cfg.to_pairs().into_iter().collect(),
        status: Status::Ok,
        metric: cfg.task.metric().to_string(),
        best_score: None,
        best_epoch: None,
        metrics: BTreeMap::new(),
        history: Vec::with_capacity(cfg.epochs + 1),
        num_parameters: trainer.model.num_parameters(),
        error: None,
    };
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    for epoch in 0..=cfg.epochs {
        if epoch > 0 {
            let loss = trainer.step(&mut opt, epoch)?;
            if !loss.is_finite() || !trainer.model.store.all_finite() {
                record.status = Status::Failed;
                record.error = Some(format!("diverged at epoch {epoch} (loss {loss})"));
                record.history.push(None);
                break;
            }
        }
        match trainer.evaluate() {
            Ok(metrics) => {
                let score = metrics[0].1;
                record.history.push(Some(score));
                if record.best_score.is_none_or(|b| score > b) {
                    record.best_score = Some(score);
                    record.best_epoch = Some(epoch);
                    record.metrics = metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                }
            }
            Err(Error::UndefinedMetric(why)) => {
                record.status = Status::Failed;
                record.error = Some(format!("epoch {epoch}: {why}"));
                record.history.push(None);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if record.status == Status::Failed {
        record.best_score = None;
        record.best_epoch = None;
        record.metrics.clear();
    }
    Ok(record)
}
