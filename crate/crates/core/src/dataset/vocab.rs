use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DialogueRecord};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Mentions, hashtags and URLs stay whole.
    RE.get_or_init(|| Regex::new(r"@\w+|#\w+|https?://\S+|\w+(?:'\w+)?|[^\w\s]").unwrap())
}

/// Lowercased word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    token_pattern()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Token ↔ id map. Ids 0..4 are PAD, UNK, CLS, SEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Model input ids plus whether old tokens had to be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub truncated: bool,
}

impl Vocab {
    pub fn specials_only() -> Self {
        SPECIALS
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// `CLS, turn₁, SEP, …, turnₙ, SEP, response, SEP`, oldest turn first.
    /// Over-long inputs lose tokens from the oldest end, just after CLS.
    pub fn format_input(
        &self,
        turns: &[String],
        response: &str,
        max_seq_len: usize,
    ) -> EncodedInput {
        let mut body = Vec::new();
        for t in turns {
            body.extend(self.encode(t));
            body.push(SEP);
        }
        body.extend(self.encode(response));
        body.push(SEP);
        let room = max_seq_len.saturating_sub(1);
        let truncated = body.len() > room;
        let start = body.len().saturating_sub(room);
        let mut ids = Vec::with_capacity(room + 1);
        ids.push(CLS);
        ids.extend_from_slice(&body[start..]);
        EncodedInput { ids, truncated }
    }
}

/// Tokens seen at least `min_freq` times across contexts and responses,
/// ordered by descending count, then lexicographically.
pub fn build_vocab(records: &[DialogueRecord], min_freq: usize) -> Result<Vocab, DatasetError> {
    if min_freq == 0 {
        return Err(DatasetError::InvalidArgument(
            "min_freq must be at least 1".into(),
        ));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        for text in r.context.iter().chain(std::iter::once(&r.response)) {
            for t in tokenize(text) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !SPECIALS.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(t, _)| t));
    Ok(tokens.into())
}
