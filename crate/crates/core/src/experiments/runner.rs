use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{Cell, ExperimentPlan, ExperimentSet, ExtraSource};
use crate::corpus::{regime_order, sample_negatives, Corpus};
use crate::error::{Error, Result};
use crate::model::HierModel;
use crate::training::{score_corpus, split_dev, train, EpochRecord, LossSpec, TrainConfig, Variation};

/// Outcome of one plan cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub set: ExperimentSet,
    pub variation: Variation,
    pub kept: usize,
    /// Extra coarse-only documents the regime offers; the baseline ignores them.
    pub extra: usize,
    pub negatives: usize,
    pub train_documents: usize,
    pub dev_documents: usize,
    pub repeat: usize,
    pub seed: u64,
    pub test_f1: f64,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub history: Vec<EpochRecord>,
}

impl RunRecord {
    /// Table order: descending kept, then variation, then repeat.
    fn sort_key(&self) -> (std::cmp::Reverse<usize>, Variation, usize) {
        (std::cmp::Reverse(self.kept), self.variation, self.repeat)
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by_key(RunRecord::sort_key);
}

pub fn write_records(records: &[RunRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// A plan stopped by a failing cell, with the records finished before it.
#[derive(Debug)]
pub struct PlanFailure {
    pub records: Vec<RunRecord>,
    pub cell: Cell,
    pub error: Error,
}

impl fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cell;
        write!(
            f,
            "cell kept={} variation={} repeat={} failed after {} completed runs: {}",
            c.kept,
            c.variation,
            c.repeat,
            self.records.len(),
            self.error
        )
    }
}

impl std::error::Error for PlanFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Corpora shared by every cell of a plan.
#[derive(Debug, Clone, Copy)]
pub struct PlanData<'a> {
    pub corpus: &'a Corpus,
    pub negative_pool: &'a Corpus,
    pub test: &'a Corpus,
}

impl PlanData<'_> {
    /// Checks the fixed test corpus against the plan's inputs.
    pub fn validate(&self, plan: &ExperimentPlan) -> Result<()> {
        if self.corpus.len() != plan.corpus_size {
            return Err(Error::Data(format!(
                "plan built for {} documents, corpus has {}",
                plan.corpus_size,
                self.corpus.len()
            )));
        }
        if let Some(d) = self.corpus.documents.iter().find(|d| !d.has_token_annotations) {
            return Err(Error::Data(format!("training document {} lacks token labels", d.id)));
        }
        if self.test.is_empty() {
            return Err(Error::Data("empty test corpus".into()));
        }
        if let Some(d) = self.test.documents.iter().find(|d| !d.has_token_annotations) {
            return Err(Error::Data(format!("test document {} lacks token labels", d.id)));
        }
        let test_ids = self.test.ids();
        let train_ids: HashSet<&str> = self.corpus.ids().union(&self.negative_pool.ids()).copied().collect();
        if let Some(id) = test_ids.intersection(&train_ids).min() {
            return Err(Error::Data(format!("test document {id} also appears in training data")));
        }
        Ok(())
    }
}

fn regime_seed(data_seed: u64, kept: usize) -> u64 {
    data_seed ^ (kept as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Builds the cell's training and dev corpora and trains one model.
pub fn run_cell(plan: &ExperimentPlan, cell: &Cell, data: PlanData<'_>) -> Result<RunRecord> {
    let n = plan.corpus_size;
    let order = regime_order(n, plan.data_seed);
    let kept = data.corpus.select(&order[..cell.kept], format!("kept {}", cell.kept));
    let (kept_train, dev) = split_dev(&kept, plan.train.dev_fraction, cell.seed)?;
    let mut documents = kept_train.documents;
    let mut negatives = 0;
    if cell.variation != Variation::Baseline {
        let extra_indices = match plan.extra {
            ExtraSource::None => &order[..0],
            ExtraSource::DiscardedComplement => &order[cell.kept..],
            ExtraSource::Fixed(e) => &order[n - e..],
        };
        documents.extend(
            extra_indices
                .iter()
                .map(|&i| data.corpus.documents[i].clone().into_coarse(plan.extra_sentence_labels)),
        );
        let count = plan.negative_count(cell.kept);
        if count > 0 {
            let pool = sample_negatives(
                data.negative_pool,
                count,
                regime_seed(plan.data_seed, cell.kept),
                plan.negatives_sentence_labels,
            )?;
            negatives = pool.len();
            documents.extend(pool.documents);
        }
    }
    let train_corpus = Corpus::new(documents, format!("set {} kept {} {}", plan.set, cell.kept, cell.variation))?;
    let model = HierModel::new(plan.model.clone(), cell.seed)?;
    let cfg = TrainConfig {
        seed: cell.seed,
        ..plan.train
    };
    let outcome = train(model, &train_corpus, &dev, &LossSpec::for_variation(cell.variation), &cfg)?;
    let test_f1 = score_corpus(&outcome.model, data.test)?.f1();
    log::info!(
        "set {} kept {} {} repeat {}: test F1 {test_f1:.2}",
        plan.set,
        cell.kept,
        cell.variation,
        cell.repeat
    );
    Ok(RunRecord {
        set: plan.set,
        variation: cell.variation,
        kept: cell.kept,
        extra: cell.extra,
        negatives,
        train_documents: train_corpus.len(),
        dev_documents: dev.len(),
        repeat: cell.repeat,
        seed: cell.seed,
        test_f1,
        best_epoch: outcome.best_epoch,
        best_dev_f1: outcome.best_dev_f1,
        history: outcome.history,
    })
}

/// Runs every cell, up to `jobs` at a time. After a failure no new cell
/// starts and the finished records come back with the error.
pub fn run_plan(plan: &ExperimentPlan, data: PlanData<'_>, jobs: usize) -> std::result::Result<Vec<RunRecord>, PlanFailure> {
    let cells = plan.cells();
    if let Err(error) = data.validate(plan) {
        return Err(PlanFailure {
            records: Vec::new(),
            cell: cells[0],
            error,
        });
    }
    let stop = AtomicBool::new(false);
    let run = || {
        cells
            .par_iter()
            .map(|cell| {
                if stop.load(Ordering::SeqCst) {
                    return None;
                }
                let out = run_cell(plan, cell, data);
                if out.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                Some((cell, out))
            })
            .collect::<Vec<_>>()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            return Err(PlanFailure {
                records: Vec::new(),
                cell: cells[0],
                error: Error::Config(format!("thread pool: {e}")),
            })
        }
    };
    let mut records = Vec::new();
    let mut failure = None;
    for (cell, out) in results.into_iter().flatten() {
        match out {
            Ok(r) => records.push(r),
            Err(e) if failure.is_none() => failure = Some((*cell, e)),
            Err(_) => {}
        }
    }
    sort_records(&mut records);
    match failure {
        None => Ok(records),
        Some((cell, error)) => Err(PlanFailure { records, cell, error }),
    }
}
