use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_fresh_ids, retrieve_topk, AugmentError, NspScorer, ResponseEncoder, ResponseIndex};
use crate::dataset::{AugmentMethod, DialogueRecord, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CraConfig {
    /// Candidates retrieved per thread; capped at the index size.
    pub k: usize,
    /// Threads whose best candidate scores below this emit nothing.
    pub min_nsp_confidence: f64,
}

impl Default for CraConfig {
    fn default() -> Self {
        Self {
            k: 50,
            min_nsp_confidence: 0.5,
        }
    }
}

impl CraConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.k == 0 {
            return Err(AugmentError::InvalidArgument("cra.k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_nsp_confidence) {
            return Err(AugmentError::InvalidArgument(
                "cra.min_nsp_confidence must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CraDecision {
    Accepted(DialogueRecord),
    Rejected { best_confidence: f64 },
}

/// Labels one unlabeled thread: retrieve the `k` labeled responses closest
/// to its response, score each as a continuation of its context, and emit
/// the context with the best-scoring response and that response's label.
/// Equal scores keep the earlier (more similar) candidate. The thread's own
/// response serves only as the retrieval query.
pub fn cra_augment(
    unlabeled: &DialogueRecord,
    index: &ResponseIndex,
    encoder: &dyn ResponseEncoder,
    scorer: &NspScorer,
    cfg: &CraConfig,
) -> Result<(CraDecision, usize), AugmentError> {
    cfg.validate()?;
    if index.is_empty() {
        return Err(AugmentError::EmptyIndex);
    }
    if unlabeled.context.is_empty() || unlabeled.response.trim().is_empty() {
        return Err(AugmentError::InvalidArgument(format!(
            "thread {} needs a context and a response",
            unlabeled.id
        )));
    }
    let query = encoder
        .encode(&unlabeled.response)
        .map_err(|reason| AugmentError::Encoder {
            id: unlabeled.id.clone(),
            reason,
        })?;
    let candidates = retrieve_topk(index, &query, cfg.k.min(index.len()))?;
    let mut truncated = 0;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = scorer.score(&unlabeled.context, &c.response)?;
        truncated += usize::from(s.truncated);
        if best.is_none_or(|(_, b)| s.confidence > b) {
            best = Some((i, s.confidence));
        }
    }
    let (i, confidence) = best.expect("k ≥ 1");
    if confidence < cfg.min_nsp_confidence {
        return Ok((
            CraDecision::Rejected {
                best_confidence: confidence,
            },
            truncated,
        ));
    }
    let chosen = &candidates[i];
    let mut rec = DialogueRecord::new(
        format!("{}#cra", unlabeled.id),
        unlabeled.context.clone(),
        chosen.response.clone(),
        Some(chosen.label),
    );
    rec.provenance = Some(Provenance {
        source_id: unlabeled.id.clone(),
        method: AugmentMethod::Cra,
        cosine: Some(chosen.cosine),
        nsp_confidence: Some(confidence),
        candidate_id: Some(chosen.record_id.clone()),
        language: None,
    });
    Ok((CraDecision::Accepted(rec), truncated))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraOutcome {
    /// Emitted records, ordered by source id.
    pub records: Vec<DialogueRecord>,
    /// `(source id, best confidence)` of threads below the threshold.
    pub rejected: Vec<(String, f64)>,
    /// Scored pairs whose context had to be truncated.
    pub truncated_pairs: usize,
}

/// [`cra_augment`] over many threads in parallel.
pub fn cra_augment_all(
    unlabeled: &[DialogueRecord],
    index: &ResponseIndex,
    encoder: &dyn ResponseEncoder,
    scorer: &NspScorer,
    cfg: &CraConfig,
) -> Result<CraOutcome, AugmentError> {
    let mut results = unlabeled
        .par_iter()
        .map(|r| Ok((r.id.clone(), cra_augment(r, index, encoder, scorer, cfg)?)))
        .collect::<Result<Vec<_>, AugmentError>>()?;
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = CraOutcome {
        records: Vec::new(),
        rejected: Vec::new(),
        truncated_pairs: 0,
    };
    for (id, (decision, truncated)) in results {
        out.truncated_pairs += truncated;
        match decision {
            CraDecision::Accepted(r) => out.records.push(r),
            CraDecision::Rejected { best_confidence } => out.rejected.push((id, best_confidence)),
        }
    }
    check_fresh_ids(unlabeled, &out.records)?;
    Ok(out)
}
