//! Labeled augmentation (context-prefix negatives, back-translated
//! positives) and contextual response augmentation (CRA) of unlabeled
//! threads: embed the thread's response, retrieve similar labeled
//! responses, rerank them by next-sentence confidence against the thread's
//! context, and transfer the winner's label.

mod cra;
mod negatives;
mod nsp;
mod retrieval;
mod translate;

use std::collections::HashSet;

use thiserror::Error;

use crate::dataset::DialogueRecord;
use crate::layers::ModelError;
use crate::training::TrainError;

pub use cra::{cra_augment, cra_augment_all, CraConfig, CraDecision, CraOutcome};
pub use negatives::{derive_context_negatives, NegativeOutcome};
pub use nsp::{
    nsp_pairs, nsp_param_shapes, train_nsp_scorer, NspEpoch, NspHead, NspModel, NspPair, NspScore,
    NspScorer, NspTrainConfig, NspTrainOutcome,
};
pub use retrieval::{
    build_response_index, cosine, retrieve_topk, FileEncoder, IndexEntry, ModelMeanEncoder,
    ResponseEncoder, ResponseIndex, RetrievalCandidate, TfIdfEncoder,
};
pub use translate::{
    back_translate, balance_with_positives, BackTranslation, BalanceOutcome, HttpTranslator,
    HttpTranslatorConfig, IdentityTranslator, Paraphrase, SynonymTranslator, TranslateError,
    TranslationFailure, Translator, API_KEY_VAR, ENDPOINT_VAR,
};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("record {id} has no label")]
    Unlabeled { id: String },
    #[error("response index is empty")]
    EmptyIndex,
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("encoder failed on {id}: {reason}")]
    Encoder { id: String, reason: String },
    #[error("all {attempts} translations failed; first error: {first}")]
    AllTranslationsFailed {
        attempts: usize,
        first: TranslateError,
    },
    #[error("cannot form negative pairs: every response is identical")]
    DegenerateCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Rejects generated ids that collide with a source id or with each other.
fn check_fresh_ids(sources: &[DialogueRecord], generated: &[DialogueRecord]) -> Result<(), AugmentError> {
    let mut seen: HashSet<&str> = sources.iter().map(|r| r.id.as_str()).collect();
    for r in generated {
        if !seen.insert(&r.id) {
            return Err(AugmentError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}
