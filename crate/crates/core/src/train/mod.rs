//! Tasks, data splits, negative sampling, optimizers, metrics and the
//! single-trial training loop.

pub mod metrics;
mod optim;
mod split;
mod task;
mod trial;

pub use metrics::{macro_f1, micro_f1, mrr, roc_auc, RankGroup};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETAS, ADAM_EPS};
pub use split::{
    make_splits, negative_sample, positive_edges, training_graph, Split, DEFAULT_SPLITS, MIN_PER_CLASS,
    VALID_FRACTION,
};
pub use task::Task;
pub use trial::{train_trial, Status, TrialRecord, MRR_NEGATIVES, RECORD_FORMAT, TRAIN_NEGATIVES};
