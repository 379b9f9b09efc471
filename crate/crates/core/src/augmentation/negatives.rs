use super::{check_fresh_ids, AugmentError};
use crate::dataset::{AugmentMethod, DialogueRecord, Label, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeOutcome {
    pub records: Vec<DialogueRecord>,
    /// Inputs with fewer than two context turns.
    pub skipped: usize,
}

/// Promotes each record's last context turn to the response position and
/// labels the result NOT_SARCASM, whatever the source label. Output ids are
/// `{source}#neg`.
pub fn derive_context_negatives(records: &[DialogueRecord]) -> Result<NegativeOutcome, AugmentError> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for r in records {
        let Some((last, rest)) = r.context.split_last() else {
            skipped += 1;
            continue;
        };
        if rest.is_empty() {
            skipped += 1;
            continue;
        }
        let mut rec = DialogueRecord::new(
            format!("{}#neg", r.id),
            rest.to_vec(),
            last.clone(),
            Some(Label::NotSarcasm),
        );
        rec.provenance = Some(Provenance {
            source_id: r.id.clone(),
            method: AugmentMethod::ContextNegative,
            cosine: None,
            nsp_confidence: None,
            candidate_id: None,
            language: None,
        });
        out.push(rec);
    }
    check_fresh_ids(records, &out)?;
    Ok(NegativeOutcome {
        records: out,
        skipped,
    })
}
