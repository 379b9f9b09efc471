use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decide, samples_from_views, train, TrainConfig, TrainError, TrainOutcome};
use crate::dataset::{context_windows, expand_corpus, DialogueRecord, Label, Vocab, WindowSize};
use crate::eval::{confusion, metrics, table2, MetricReport};
use crate::layers::{ModelConfig, ModelInput, PoolingMode, SarcasmModel};

/// How member probabilities become one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Arithmetic mean of class probabilities.
    #[default]
    MeanProb,
    /// Fraction of members voting for each class.
    MajorityVote,
}

impl Combine {
    pub fn combine(self, member_probs: &[[f64; 2]]) -> [f64; 2] {
        let n = member_probs.len() as f64;
        match self {
            Combine::MeanProb => {
                let s = member_probs
                    .iter()
                    .fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
                [s[0] / n, s[1] / n]
            }
            Combine::MajorityVote => {
                let yes = member_probs
                    .iter()
                    .filter(|p| decide(&p[..]) == Label::Sarcasm)
                    .count() as f64;
                [(n - yes) / n, yes / n]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub window: WindowSize,
    pub model: SarcasmModel<f64>,
}

/// Models trained on different context windows, ascending by window.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<EnsembleMember>,
    pub combine: Combine,
    pub vocab: Vocab,
}

impl EnsembleModel {
    /// Members are sorted by window; duplicate windows are rejected.
    pub fn new(
        mut members: Vec<EnsembleMember>,
        combine: Combine,
        vocab: Vocab,
    ) -> Result<Self, TrainError> {
        if members.is_empty() {
            return Err(TrainError::Config(
                "ensemble needs at least one member".into(),
            ));
        }
        members.sort_by_key(|m| m.window);
        if members.windows(2).any(|w| w[0].window == w[1].window) {
            return Err(TrainError::Config(
                "ensemble window sizes must be distinct".into(),
            ));
        }
        Ok(Self {
            members,
            combine,
            vocab,
        })
    }

    /// The member input for `record` under window `window`.
    pub fn member_input(
        &self,
        member: &EnsembleMember,
        record: &DialogueRecord,
    ) -> ModelInput<f64> {
        let view = context_windows(record, &[member.window]).remove(0);
        let max_len = member.model.config.encoder.max_seq_len;
        ModelInput::Tokens(
            self.vocab
                .format_input(&view.turns, &view.response, max_len)
                .ids,
        )
    }
}

/// Each member scores the record through its own window; ties go to
/// NOT_SARCASM.
pub fn ensemble_predict(
    model: &EnsembleModel,
    record: &DialogueRecord,
) -> Result<(Label, [f64; 2]), TrainError> {
    let probs = model
        .members
        .iter()
        .map(|m| {
            let p = m.model.predict(&model.member_input(m, record))?;
            Ok([p.data()[0], p.data()[1]])
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let combined = model.combine.combine(&probs);
    Ok((decide(&combined), combined))
}

pub fn ensemble_predict_all(
    model: &EnsembleModel,
    records: &[DialogueRecord],
) -> Result<Vec<(Label, [f64; 2])>, TrainError> {
    records
        .par_iter()
        .map(|r| ensemble_predict(model, r))
        .collect()
}

/// Macro-averaged metrics of the ensemble over labeled records.
pub fn ensemble_evaluate(
    model: &EnsembleModel,
    records: &[DialogueRecord],
) -> Result<MetricReport, TrainError> {
    let gold = records
        .iter()
        .map(|r| {
            r.label
                .ok_or_else(|| TrainError::Unlabeled { id: r.id.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if gold.is_empty() {
        return Err(TrainError::EmptyData("evaluation"));
    }
    let preds: Vec<Label> = ensemble_predict_all(model, records)?
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    Ok(metrics(
        &confusion(&preds, &gold).expect("equal, non-empty"),
    ))
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub model: EnsembleModel,
    /// Training outcome per member, in member order.
    pub members: Vec<(WindowSize, TrainOutcome)>,
    /// The combined ensemble on the validation records.
    pub valid_report: MetricReport,
}

/// Trains one model per window size in `cfg.window_sizes`, each on the
/// corpus seen through that window only. Members train in parallel; member
/// `i` (ascending window order) is initialized and shuffled from
/// `cfg.seed + i`.
pub fn train_context_ensemble(
    train_records: &[DialogueRecord],
    valid_records: &[DialogueRecord],
    model_config: &ModelConfig,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<EnsembleOutcome, TrainError> {
    cfg.validate()?;
    let mut windows = cfg.window_sizes.clone();
    windows.sort();
    windows.dedup();
    let max_len = model_config.encoder.max_seq_len;
    let trained = windows
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let train_s = samples_from_views(&expand_corpus(train_records, &[w]), vocab, max_len)?;
            let valid_s = samples_from_views(&expand_corpus(valid_records, &[w]), vocab, max_len)?;
            let init = SarcasmModel::seeded(model_config, seed)?;
            let member_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            Ok((w, train(&init, &train_s, &valid_s, &member_cfg)?))
        })
        .collect::<Result<Vec<(WindowSize, TrainOutcome)>, TrainError>>()?;
    let model = EnsembleModel::new(
        trained
            .iter()
            .map(|(w, o)| EnsembleMember {
                window: *w,
                model: o.best.clone(),
            })
            .collect(),
        cfg.combine,
        vocab.clone(),
    )?;
    let valid_report = ensemble_evaluate(&model, valid_records)?;
    Ok(EnsembleOutcome {
        model,
        members: trained,
        valid_report,
    })
}

/// Validation results for each pooling mode.
#[derive(Debug, Clone)]
pub struct PoolingComparison {
    pub rows: Vec<(PoolingMode, MetricReport)>,
}

impl PoolingComparison {
    pub fn row_name(mode: PoolingMode) -> &'static str {
        match mode {
            PoolingMode::NextVlad => "T+BiLSTM+NeXtVLAD",
            PoolingMode::Max => "T+BiLSTM+MaxPool",
            PoolingMode::Mean => "T+BiLSTM+MeanPool",
        }
    }

    /// Precision / Recall / F1 rows, one per pooling mode.
    pub fn report(&self) -> String {
        let rows: Vec<(&str, &MetricReport)> = self
            .rows
            .iter()
            .map(|(m, r)| (Self::row_name(*m), r))
            .collect();
        table2(&rows)
    }
}

/// Trains the same ensemble under NeXtVLAD, max and mean pooling.
pub fn compare_pooling(
    train_records: &[DialogueRecord],
    valid_records: &[DialogueRecord],
    model_config: &ModelConfig,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<PoolingComparison, TrainError> {
    let rows = PoolingMode::ALL
        .iter()
        .map(|&mode| {
            let mut mc = model_config.clone();
            mc.pooling.mode = mode;
            let out = train_context_ensemble(train_records, valid_records, &mc, vocab, cfg)?;
            Ok((mode, out.valid_report))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(PoolingComparison { rows })
}
