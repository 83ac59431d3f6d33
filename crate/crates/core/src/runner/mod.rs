//! Experiment orchestration: expands a plan into trials, runs them on a
//! worker pool, and persists one JSON record per line behind a header that
//! carries the plan hash.
//!
//! Trial `k` trains configuration `k / splits` on split `k % splits`. Its
//! record depends only on the plan and `k`, so the finalized file (records
//! sorted by trial id) does not depend on parallelism or completion order.

mod plan;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use plan::{ExperimentPlan, SpaceChoice};

use crate::designspace::{all_strata, perturb_dimension, sample_controlled, structural_errors};
use crate::error::{Error, Result};
use crate::hgraph::{load_graph, HeteroGraph};
use crate::model::DesignConfig;
use crate::train::{make_splits, train_trial, Split, Status, TrialRecord, RECORD_FORMAT};

/// Environment variable that overrides a plan's parallelism.
pub const THREADS_ENV: &str = "HGNN_SPACE_THREADS";

/// Salt separating split seeds from configuration seeds.
const SPLIT_SALT: u64 = 0x5eed_5b17;

/// First line of every results file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub plan_hash: String,
    pub format: u32,
    pub trials: usize,
}

/// Scores one configuration on one split.
pub trait Objective: Sync {
    fn evaluate(&self, cfg: &DesignConfig, graph: &HeteroGraph, split: &Split) -> Result<TrialRecord>;
}

/// Real training, optionally with an epoch cap.
#[derive(Clone, Copy, Debug, Default)]
pub struct Training {
    pub max_epochs: Option<usize>,
}

impl Objective for Training {
    fn evaluate(&self, cfg: &DesignConfig, graph: &HeteroGraph, split: &Split) -> Result<TrialRecord> {
        match self.max_epochs {
            Some(cap) if cfg.epochs > cap => {
                let mut capped = cfg.clone();
                capped.epochs = cap;
                let mut record = train_trial(&capped, graph, split)?;
                record.config = cfg.to_pairs().into_iter().collect();
                Ok(record)
            }
            _ => train_trial(cfg, graph, split),
        }
    }
}

/// A loaded plan: the graph, every configuration and every split.
pub struct Experiment {
    pub plan: ExperimentPlan,
    pub graph: HeteroGraph,
    pub configs: Vec<DesignConfig>,
    pub splits: Vec<Split>,
    pub hash: String,
}

fn base_config(plan: &ExperimentPlan) -> DesignConfig {
    let mut base = DesignConfig::rgcn(plan.task.clone());
    base.metapaths = plan.metapaths.clone();
    base.attention_form = plan.attention_form;
    base
}

fn read_explicit(path: &Path, base: &DesignConfig) -> Result<Vec<DesignConfig>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, line)| {
            let pairs = line
                .split_whitespace()
                .map(|kv| {
                    kv.split_once('=')
                        .ok_or_else(|| Error::Plan(format!("config {i}: `{kv}` is not key=value")))
                })
                .collect::<Result<Vec<_>>>()?;
            DesignConfig::from_pairs(base, pairs).map_err(|e| Error::Plan(format!("config {i}: {e}")))
        })
        .collect()
}

impl Experiment {
    pub fn new(plan: ExperimentPlan) -> Result<Self> {
        let graph = load_graph(&plan.graph)?;
        let hash = plan.hash()?;
        let base = base_config(&plan);
        let bases = match (&plan.space, plan.design_space()) {
            (SpaceChoice::Explicit(path), _) => read_explicit(path, &base)?,
            (_, Some(space)) => {
                let strata = if plan.strata_hits > 0 { all_strata(&space, plan.strata_hits)? } else { Vec::new() };
                sample_controlled(&space, &base, plan.n, &strata, plan.seed)?
            }
            (_, None) => unreachable!("non-explicit plans have a design space"),
        };
        let configs = match (&plan.dimension, plan.design_space()) {
            (None, _) => bases,
            (Some(dim), Some(space)) => {
                let mut out = Vec::new();
                for b in &bases {
                    match perturb_dimension(&space, b, dim) {
                        Ok(set) => out.extend(set),
                        // macro setups exist only for dual families
                        Err(Error::Inapplicable { .. }) if dim == "macro" => {}
                        Err(e) => return Err(e),
                    }
                }
                out
            }
            (Some(_), None) => return Err(Error::Plan("`dimension` needs a full or condensed space".into())),
        };
        let mut problems = Vec::new();
        for (i, cfg) in configs.iter().enumerate() {
            for e in structural_errors(cfg, graph.schema()) {
                problems.push(format!("config {i}: {e}"));
            }
        }
        if !problems.is_empty() {
            problems.truncate(10);
            return Err(Error::Plan(problems.join("; ")));
        }
        let splits = make_splits(&plan.task, &graph, plan.splits, plan.seed ^ SPLIT_SALT)?;
        Ok(Experiment {
            plan,
            graph,
            configs,
            splits,
            hash,
        })
    }

    pub fn num_trials(&self) -> usize {
        self.configs.len() * self.splits.len()
    }

    /// Runs trial `k` alone. Errors from the objective become failed
    /// records.
    pub fn run_trial(&self, k: usize, objective: &dyn Objective) -> Result<TrialRecord> {
        if k >= self.num_trials() {
            return Err(Error::Plan(format!("trial {k} beyond {} trials", self.num_trials())));
        }
        let n_splits = self.splits.len();
        let (c, s) = (k / n_splits, k % n_splits);
        let cfg = &self.configs[c];
        let split = &self.splits[s];
        let mut record = objective
            .evaluate(cfg, &self.graph, split)
            .unwrap_or_else(|e| failed_record(cfg, split, e));
        record.trial = k;
        record.config_id = c;
        record.split = split.id;
        Ok(record)
    }

    fn header(&self) -> ResultsHeader {
        ResultsHeader {
            plan_hash: self.hash.clone(),
            format: RECORD_FORMAT,
            trials: self.num_trials(),
        }
    }
}

fn failed_record(cfg: &DesignConfig, split: &Split, e: Error) -> TrialRecord {
    TrialRecord {
        format: RECORD_FORMAT,
        trial: 0,
        config_id: 0,
        split: split.id,
        seed: cfg.seed,
        config: cfg.to_pairs().into_iter().collect(),
        status: Status::Failed,
        metric: cfg.task.metric().to_string(),
        best_score: None,
        best_epoch: None,
        metrics: BTreeMap::new(),
        history: Vec::new(),
        num_parameters: 0,
        error: Some(e.to_string()),
    }
}

/// What a run did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub output: PathBuf,
    pub total: usize,
    pub executed: usize,
    pub failed: usize,
}

/// Worker count: `HGNN_SPACE_THREADS` if set, else the plan's value.
pub fn effective_parallelism(plan: &ExperimentPlan) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(plan.parallelism)
}

/// Reads a results file, keeping every well-formed record line. Returns
/// the header and the records (unsorted, possibly with duplicates).
pub fn read_results(path: &Path) -> Result<(ResultsHeader, Vec<TrialRecord>)> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Plan(format!("{}: empty results file", path.display())))??;
    let header: ResultsHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Plan(format!("{}: bad header: {e}", path.display())))?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if let Ok(r) = serde_json::from_str::<TrialRecord>(&line) {
            records.push(r);
        }
    }
    Ok((header, records))
}

fn write_sorted(path: &Path, header: &ResultsHeader, records: &BTreeMap<usize, TrialRecord>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for r in records.values() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Experiment {
    /// Runs every trial missing from the output file (all of them unless
    /// `resume`), appending records as they finish, then rewrites the file
    /// sorted by trial id.
    pub fn run(&self, objective: &dyn Objective, parallelism: usize, resume: bool) -> Result<RunSummary> {
        let header = self.header();
        let out = &self.plan.output;
        let mut done: BTreeMap<usize, TrialRecord> = BTreeMap::new();
        if resume && out.exists() {
            let (found, records) = read_results(out)?;
            if found.plan_hash != header.plan_hash {
                return Err(Error::PlanHashMismatch {
                    expected: header.plan_hash,
                    found: found.plan_hash,
                });
            }
            for r in records {
                if r.trial < header.trials {
                    done.entry(r.trial).or_insert(r);
                }
            }
        }
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        // start from a clean file holding only the records being kept
        write_sorted(out, &header, &done)?;

        let todo: Vec<usize> = (0..header.trials).filter(|k| !done.contains_key(k)).collect();
        let executed = todo.len();
        if executed > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism.max(1))
                .build()
                .map_err(|e| Error::Plan(format!("thread pool: {e}")))?;
            let (tx, rx) = mpsc::channel::<Result<TrialRecord>>();
            let mut file = OpenOptions::new().append(true).open(out)?;
            std::thread::scope(|scope| -> Result<()> {
                scope.spawn(|| {
                    pool.install(|| {
                        todo.par_iter().for_each_with(tx, |tx, &k| {
                            let _ = tx.send(self.run_trial(k, objective));
                        })
                    })
                });
                for r in rx {
                    let r = r?;
                    let mut line = serde_json::to_vec(&r)?;
                    line.push(b'\n');
                    file.write_all(&line)?;
                    done.insert(r.trial, r);
                }
                Ok(())
            })?;
            file.flush()?;
        }
        write_sorted(out, &header, &done)?;
        Ok(RunSummary {
            output: out.clone(),
            total: header.trials,
            executed,
            failed: done.values().filter(|r| r.status == Status::Failed).count(),
        })
    }
}

/// Loads `plan` and runs all of its trials with real training.
pub fn run_plan(plan: ExperimentPlan) -> Result<RunSummary> {
    let parallelism = effective_parallelism(&plan);
    let training = Training {
        max_epochs: plan.max_epochs,
    };
    Experiment::new(plan)?.run(&training, parallelism, false)
}

/// Completes a partially written results file of the same plan.
pub fn resume(plan: ExperimentPlan) -> Result<RunSummary> {
    let parallelism = effective_parallelism(&plan);
    let training = Training {
        max_epochs: plan.max_epochs,
    };
    Experiment::new(plan)?.run(&training, parallelism, true)
}
