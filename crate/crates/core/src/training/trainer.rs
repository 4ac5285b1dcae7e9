use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::history::EpochRecord;
use super::loss::{document_gradients, LossSpec, LossValues};
use super::optim::{clip_gradients, optimizer_step, AdamConfig, OptimizerState};
use crate::corpus::{batch_document, BatchedDocument, Corpus};
use crate::error::{contract, Error, Result};
use crate::model::{Dropout, HierModel};
use crate::scoring::{chunk_f1, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_encoder: f64,
    pub lr_rest: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    /// Documents per optimizer step; the loss is averaged over the window.
    pub accumulation: usize,
    pub epochs: usize,
    /// Share of annotated documents held out for model selection. Zero
    /// selects on the training documents themselves.
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_encoder: 2e-5,
            lr_rest: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            accumulation: 16,
            epochs: 30,
            dev_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_rest", self.lr_rest),
            ("weight_decay", self.weight_decay),
            ("epsilon", self.epsilon),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1)"));
            }
        }
        if self.clip_norm == 0.0 {
            return bad("clip_norm must be positive".into());
        }
        if self.accumulation == 0 {
            return bad("accumulation must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad(format!("dev_fraction {} outside [0, 1)", self.dev_fraction));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr_encoder: self.lr_encoder,
            lr_rest: self.lr_rest,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev F1 (earliest on ties).
    pub model: HierModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Splits off a dev set from the token-annotated documents.
///
/// With `fraction == 0`, or a single annotated document, the dev set is the
/// annotated documents themselves and training keeps everything. Otherwise
/// `max(1, round(fraction·n))` documents move to dev, always leaving one.
pub fn split_dev(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("dev_fraction {fraction} outside [0, 1)")));
    }
    let mut annotated: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.documents[i].has_token_annotations)
        .collect();
    if annotated.is_empty() {
        return contract("no token-annotated documents for a dev set");
    }
    let prov = format!("{} [dev]", corpus.provenance);
    if fraction == 0.0 || annotated.len() == 1 {
        return Ok((corpus.clone(), corpus.select(&annotated, prov)));
    }
    let n = annotated.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    annotated.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dev = annotated[..k].to_vec();
    dev.sort_unstable();
    let train: Vec<usize> = (0..corpus.len()).filter(|i| dev.binary_search(i).is_err()).collect();
    Ok((
        corpus.select(&train, format!("{} [train]", corpus.provenance)),
        corpus.select(&dev, prov),
    ))
}

pub fn batch_corpus(model: &HierModel, corpus: &Corpus) -> Result<Vec<BatchedDocument>> {
    let (vocab, batch) = (&model.config().vocab, model.config().batch());
    corpus.documents.iter().map(|d| batch_document(d, vocab, batch)).collect()
}

/// Chunk F1 of arg-max predictions; every document needs token labels.
pub fn evaluate(model: &HierModel, docs: &[BatchedDocument]) -> Result<ScoreReport> {
    let pairs = docs
        .par_iter()
        .map(|d| {
            let gold = d
                .gold_sequences()
                .ok_or_else(|| Error::Contract(format!("document {} lacks token labels", d.id)))?;
            Ok((gold, model.predict(d)?.labels))
        })
        .collect::<Result<Vec<_>>>()?;
    let (gold, pred): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(g, p)| (g.into_iter(), p.into_iter())).unzip();
    let gold: Vec<_> = gold.into_iter().flatten().collect();
    let pred: Vec<_> = pred.into_iter().flatten().collect();
    chunk_f1(&gold, &pred)
}

pub fn score_corpus(model: &HierModel, corpus: &Corpus) -> Result<ScoreReport> {
    evaluate(model, &batch_corpus(model, corpus)?)
}

fn dropout_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (position as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Trains `model` on `train`, selecting the epoch with the best chunk F1 on
/// `dev`. Training documents without any active target are skipped.
pub fn train(model: HierModel, train: &Corpus, dev: &Corpus, spec: &LossSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let mut model = model;
    let train_docs: Vec<BatchedDocument> = batch_corpus(&model, train)?
        .into_iter()
        .filter(|d| spec.has_targets(d))
        .collect();
    if train_docs.is_empty() {
        return contract("no training documents carry targets for the active losses");
    }
    let dev_docs = batch_corpus(&model, dev)?;
    if dev_docs.is_empty() {
        return contract("dev set is empty");
    }
    if let Some(d) = dev_docs.iter().find(|d| d.gold_sequences().is_none()) {
        return contract(format!("dev document {} lacks token labels", d.id));
    }
    let adam = cfg.adam();
    let rate = model.config().dropout;
    let mut state = OptimizerState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, HierModel)> = None;
    model.params_mut().zero_grad();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses: [Vec<f64>; 3] = Default::default();
        for (w, window) in order.chunks(cfg.accumulation).enumerate() {
            let results = window
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let mut drop = Dropout::new(rate, dropout_seed(cfg.seed, epoch, w * cfg.accumulation + k));
                    document_gradients(&model, &train_docs[i], spec, &mut drop)
                })
                .collect::<Result<Vec<(LossValues, Vec<Option<Vec<f64>>>)>>>()?;
            let scale = 1.0 / window.len() as f64;
            for (values, grads) in results {
                for (slot, v) in losses.iter_mut().zip([values.token, values.sentence, values.document]) {
                    slot.extend(v);
                }
                for (i, g) in grads.iter().enumerate() {
                    if let Some(g) = g {
                        model.params_mut().accumulate(i, g, scale)?;
                    }
                }
            }
            clip_gradients(model.params_mut(), cfg.clip_norm);
            optimizer_step(model.params_mut(), &mut state, &adam)?;
        }
        let dev_f1 = evaluate(&model, &dev_docs)?.f1();
        let record = EpochRecord {
            epoch,
            token_loss: mean(&losses[0]),
            sentence_loss: mean(&losses[1]),
            document_loss: mean(&losses[2]),
            dev_f1,
        };
        log::info!(
            "epoch {epoch}: token {:?} sentence {:?} document {:?} dev F1 {dev_f1:.2}",
            record.token_loss,
            record.sentence_loss,
            record.document_loss
        );
        history.push(record);
        if best.as_ref().is_none_or(|b| dev_f1 > b.1) {
            best = Some((epoch, dev_f1, model.clone()));
        }
    }
    let (best_epoch, best_dev_f1, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_dev_f1,
    })
}
