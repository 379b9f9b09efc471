//! Minibatch training with a cyclic learning rate, early stopping on
//! validation macro-F1, and context-window ensembles.

mod ensemble;
mod optimizer;
mod schedule;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ContextWindowView, Label, Vocab, WindowSize};
use crate::eval::{confusion, metrics, MetricReport};
use crate::layers::{Mode, ModelError, ModelInput, SarcasmModel};
use crate::params::Parameters;

pub use ensemble::{
    compare_pooling, ensemble_evaluate, ensemble_predict, ensemble_predict_all,
    train_context_ensemble, Combine, EnsembleMember, EnsembleModel, EnsembleOutcome,
    PoolingComparison,
};
pub use optimizer::MomentumSgd;
pub use schedule::{cyclic_lr, CyclePolicy, CyclicLRConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptyData(&'static str),
    #[error("sample {id} has no label")]
    Unlabeled { id: String },
    #[error("non-finite loss {loss} at iteration {iteration} (lr {lr:e}, momentum {momentum})")]
    NonFiniteLoss {
        iteration: usize,
        lr: f64,
        momentum: f64,
        loss: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lr: CyclicLRConfig,
    pub window_sizes: Vec<WindowSize>,
    /// Keep encoder weights fixed and train only the layers above it.
    pub freeze_encoder: bool,
    pub combine: Combine,
    /// Batch gradients with a larger global L2 norm are rescaled to it;
    /// `0` disables clipping.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            max_epochs: 10,
            patience: 3,
            seed: 0,
            lr: CyclicLRConfig::default(),
            window_sizes: crate::dataset::default_window_sizes(),
            freeze_encoder: false,
            combine: Combine::MeanProb,
            max_grad_norm: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if self.window_sizes.is_empty() {
            return Err(TrainError::Config("window_sizes must not be empty".into()));
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm >= 0.0) {
            return Err(TrainError::Config(
                "max_grad_norm must be finite and non-negative".into(),
            ));
        }
        self.lr.validate()
    }
}

/// One tokenized, labeled model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: ModelInput<f64>,
    pub class: usize,
}

/// Tokenizes windowed views; every view must carry a label.
pub fn samples_from_views(
    views: &[ContextWindowView],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<Vec<Sample>, TrainError> {
    views
        .iter()
        .map(|v| {
            let label = v.label.ok_or_else(|| TrainError::Unlabeled {
                id: v.source_id.clone(),
            })?;
            Ok(Sample {
                id: v.source_id.clone(),
                input: ModelInput::Tokens(
                    vocab.format_input(&v.turns, &v.response, max_seq_len).ids,
                ),
                class: label.index(),
            })
        })
        .collect()
}

/// Argmax over `[NOT_SARCASM, SARCASM]`; ties go to NOT_SARCASM.
pub fn decide(probs: &[f64]) -> Label {
    if probs[1] > probs[0] {
        Label::Sarcasm
    } else {
        Label::NotSarcasm
    }
}

/// Eval-mode class probabilities for every sample, in order.
pub fn predict_all(
    model: &SarcasmModel<f64>,
    inputs: &[ModelInput<f64>],
) -> Result<Vec<[f64; 2]>, ModelError> {
    inputs
        .par_iter()
        .map(|x| {
            let p = model.predict(x)?;
            Ok([p.data()[0], p.data()[1]])
        })
        .collect()
}

pub fn evaluate(model: &SarcasmModel<f64>, samples: &[Sample]) -> Result<MetricReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyData("evaluation"));
    }
    let inputs: Vec<ModelInput<f64>> = samples.iter().map(|s| s.input.clone()).collect();
    let preds: Vec<Label> = predict_all(model, &inputs)?
        .iter()
        .map(|p| decide(p))
        .collect();
    let gold: Vec<Label> = samples
        .iter()
        .map(|s| Label::from_index(s.class).expect("class index"))
        .collect();
    Ok(metrics(
        &confusion(&preds, &gold).expect("equal, non-empty"),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_precision: f64,
    pub valid_recall: f64,
    pub valid_f1: f64,
    pub lr_min: f64,
    pub lr_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation macro-F1.
    pub best: SarcasmModel<f64>,
    pub best_epoch: usize,
    pub best_f1: f64,
    /// Parameters after the last completed epoch.
    pub last: SarcasmModel<f64>,
    pub history: Vec<EpochRecord>,
}

/// Minibatch descent on mean cross-entropy with momentum on the cyclic
/// schedule. Stops after `patience` epochs without a validation macro-F1
/// improvement and returns the best epoch's parameters.
///
/// Deterministic in `(model, data, cfg)`: per-sample dropout generators
/// are drawn up front from the seeded generator and batch gradients are
/// summed in sample order, so the parallel inner loop does not perturb
/// results.
pub fn train(
    model: &SarcasmModel<f64>,
    train_data: &[Sample],
    valid_data: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyData("training"));
    }
    if valid_data.is_empty() {
        return Err(TrainError::EmptyData("validation"));
    }
    let iters_per_epoch = train_data.len().div_ceil(cfg.batch_size);
    let lr_cfg = cfg.lr.resolve(iters_per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model.clone();
    let mut opt = MomentumSgd::new(&current);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut iteration = 0usize;
    let mut history = Vec::new();
    let mut best = (current.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let (mut lr_min, mut lr_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for batch in order.chunks(cfg.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let per_sample: Vec<Result<(f64, SarcasmModel<f64>), ModelError>> = batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&i, &seed)| {
                    let s = &train_data[i];
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    let pass = current.forward(&s.input, Mode::Train, &mut r)?;
                    let mut g = current.zeroed();
                    let loss = current.backward(&pass, s.class, &mut g, !cfg.freeze_encoder)?;
                    Ok((loss, g))
                })
                .collect();
            let mut grad = current.zeroed();
            let mut batch_loss = 0.0;
            for r in per_sample {
                let (loss, g) = r?;
                batch_loss += loss;
                grad.axpy_params(1.0, &g);
            }
            let n = batch.len() as f64;
            batch_loss /= n;
            grad.scale_params(1.0 / n);
            if cfg.max_grad_norm > 0.0 {
                grad.clip_global_norm(cfg.max_grad_norm);
            }
            let (lr, momentum) = cyclic_lr(iteration, &lr_cfg);
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    iteration,
                    lr,
                    momentum,
                    loss: batch_loss,
                });
            }
            opt.step(&mut current, &grad, lr, momentum);
            lr_min = lr_min.min(lr);
            lr_max = lr_max.max(lr);
            loss_sum += batch_loss * n;
            iteration += 1;
        }
        let report = evaluate(&current, valid_data)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            valid_precision: report.macro_avg.precision,
            valid_recall: report.macro_avg.recall,
            valid_f1: report.macro_avg.f1,
            lr_min,
            lr_max,
        });
        if report.macro_avg.f1 > best.2 {
            best = (current.clone(), epoch, report.macro_avg.f1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        best_f1: best.2,
        last: current,
        history,
    })
}
