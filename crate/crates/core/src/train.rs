//! Mini-batch training with validation-based model selection, plus the
//! multi-run protocol that reports mean F1 over several seeds.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, HoldoutStrategy, Sentence};
use crate::embeddings::DualEmbedder;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, SpanScore};
use crate::model::{DeCnn, ModelConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::seeded;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Maximum epoch budget.
    pub epochs: usize,
    pub batch_size: usize,
    /// Validation sentences carved from the training set. `0` selects on
    /// training F1 (useful for overfit checks on toy data).
    pub holdout: usize,
    pub holdout_strategy: HoldoutStrategy,
    /// Stop after this many epochs without a validation F1 improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 200,
            batch_size: 32,
            holdout: 150,
            holdout_strategy: HoldoutStrategy::Tail,
            patience: 30,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::parameter("batch_size", "batch size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::parameter("epochs", "epoch budget must be >= 1"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::parameter("lr", "learning rate must be > 0"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose snapshot was returned (1-based; 0 when training never
    /// evaluated).
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best_val_f1(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.val_f1)
            .fold(0.0, |a, b| if b > a { b } else { a })
    }

    /// Line-delimited records: one JSON object per epoch.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for rec in &self.epochs {
            let line = serde_json::to_string(rec)
                .map_err(|e| Error::Data(format!("log serialization: {e}")))?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Trains in place with mini-batch Adam. After each epoch the model is
/// scored on the validation split; at return, `model` holds the parameter
/// snapshot with the best validation F1 seen.
pub fn train<S: Scalar>(
    model: &mut DeCnn<S>,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let (train_split, val_split) =
        dataset.carve_holdout(cfg.holdout, cfg.holdout_strategy, cfg.seed)?;
    train_with_validation(model, &train_split.sentences, &val_split, cfg)
}

/// Training core with an explicit validation split.
pub fn train_with_validation<S: Scalar>(
    model: &mut DeCnn<S>,
    train_sentences: &[Sentence],
    validation: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let usable: Vec<&Sentence> = train_sentences
        .iter()
        .filter(|s| !s.tokens.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::data("training set has no non-empty sentences"));
    }
    if usable.len() < train_sentences.len() {
        log::warn!(
            "skipping {} empty sentence(s) in the training set",
            train_sentences.len() - usable.len()
        );
    }

    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut states: Vec<AdamState<S>> = model
        .param_pairs_mut()
        .iter()
        .map(|(p, _)| AdamState::new(p.len(), adam_cfg))
        .collect();

    // Group sentences of similar length into batches; each sentence keeps
    // its own length, so no padding ever enters the loss.
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.sort_by_key(|&i| (usable[i].tokens.len(), i));
    let batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();

    let mut shuffle_rng = seeded(cfg.seed, "shuffle");
    let mut dropout_rng = seeded(cfg.seed, "dropout");

    let mut log = TrainLog::default();
    let mut best: Option<(f64, DeCnn<S>)> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut batch_order: Vec<usize> = (0..batches.len()).collect();
        batch_order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        let mut sentence_count = 0usize;
        for &b in &batch_order {
            let batch = &batches[b];
            model.zero_grads();
            for &si in batch {
                let sentence = usable[si];
                let trace =
                    model.forward_traced(&sentence.token_surfaces(), true, &mut dropout_rng)?;
                let loss = model.backward(&trace, &sentence.labels)?;
                loss_sum += loss.to_f64_lossy();
                sentence_count += 1;
            }
            model.scale_grads(1.0 / batch.len() as f64);
            for (state, (params, grads)) in states.iter_mut().zip(model.param_pairs_mut()) {
                state.step(params, grads)?;
            }
        }

        let val_score = evaluate(model, validation)?;
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / sentence_count as f64,
            val_precision: val_score.precision,
            val_recall: val_score.recall,
            val_f1: val_score.f1,
        });

        let improved = best.as_ref().is_none_or(|(f1, _)| val_score.f1 > *f1);
        if improved {
            best = Some((val_score.f1, model.clone()));
            log.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                break;
            }
        }
    }

    if let Some((_, snapshot)) = best {
        *model = snapshot;
    }
    Ok(log)
}

/// Outcome of a multi-run protocol: one trained-and-evaluated score per
/// seed, plus the per-run training logs.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub report: EvalReport,
    pub logs: Vec<TrainLog>,
}

/// The default seed fan-out for `runs` runs: `seed .. seed + runs`.
pub fn protocol_seeds(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base + i).collect()
}

/// Trains one model per seed and evaluates each on the test split,
/// reporting per-run scores and their mean F1.
pub fn run_protocol<S: Scalar>(
    model_cfg: &ModelConfig,
    embedder: &Arc<DualEmbedder<S>>,
    train_data: &Dataset,
    test_data: &Dataset,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<ProtocolOutcome> {
    if seeds.is_empty() {
        return Err(Error::parameter("runs", "protocol needs at least one run"));
    }
    let mut runs: Vec<SpanScore> = Vec::with_capacity(seeds.len());
    let mut logs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut mc = model_cfg.clone();
        mc.seed = seed;
        let mut tc = train_cfg.clone();
        tc.seed = seed;
        let mut model = DeCnn::init(mc, Arc::clone(embedder))?;
        let log = train(&mut model, train_data, &tc)?;
        let score = evaluate(&model, test_data)?;
        log::info!("protocol run seed={seed}: test F1 {:.4}", score.f1);
        runs.push(score);
        logs.push(log);
    }
    Ok(ProtocolOutcome {
        report: EvalReport::from_runs(runs),
        logs,
    })
}
