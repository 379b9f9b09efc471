//! Dialogue corpora: JSONL records, seeded splits, context windows and the
//! word-level vocabulary.
//!
//! One record per line:
//! `{"label": "SARCASM", "response": "...", "context": ["oldest", ..., "latest"]}`
//! with optional `id` and, for augmented records, `provenance`.

mod split;
mod vocab;
mod windows;

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{split, SplitSpec};
pub use vocab::{build_vocab, tokenize, EncodedInput, Vocab, CLS, PAD, SEP, UNK};
pub use windows::{
    context_windows, default_window_sizes, expand_corpus, max_context_sizes, parse_window_sizes,
    ContextWindowView, WindowSize,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NOT_SARCASM")]
    NotSarcasm,
    #[serde(rename = "SARCASM")]
    Sarcasm,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NotSarcasm, Label::Sarcasm];

    /// Class index in model outputs: NOT_SARCASM = 0, SARCASM = 1.
    pub fn index(self) -> usize {
        match self {
            Label::NotSarcasm => 0,
            Label::Sarcasm => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NotSarcasm),
            1 => Some(Label::Sarcasm),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NotSarcasm => "NOT_SARCASM",
            Label::Sarcasm => "SARCASM",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "SARCASM" => Some(Label::Sarcasm),
            "NOT_SARCASM" => Some(Label::NotSarcasm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    ContextNegative,
    BackTranslation,
    Cra,
}

/// Where an augmented record came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source_id: String,
    pub method: AugmentMethod,
    #[serde(default)]
    pub cosine: Option<f64>,
    #[serde(default)]
    pub nsp_confidence: Option<f64>,
    /// Labeled record whose response was transferred (CRA only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    /// Pivot language (back-translation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub response: String,
    /// Oldest turn first.
    pub context: Vec<String>,
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DialogueRecord {
    pub fn new(
        id: impl Into<String>,
        context: Vec<String>,
        response: impl Into<String>,
        label: Option<Label>,
    ) -> Self {
        Self {
            label,
            response: response.into(),
            context,
            id: id.into(),
            provenance: None,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    label: Option<serde_json::Value>,
    response: Option<String>,
    context: Option<Vec<String>>,
    id: Option<serde_json::Value>,
    provenance: Option<Provenance>,
}

fn parse_line(line: &str, line_no: usize, labeled: bool) -> Result<DialogueRecord, DatasetError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| DatasetError::Line {
        line: line_no,
        reason: e.to_string(),
    })?;
    let missing = |field| DatasetError::MissingField {
        line: line_no,
        field,
    };
    let response = raw.response.ok_or_else(|| missing("response"))?;
    if response.trim().is_empty() {
        return Err(DatasetError::Line {
            line: line_no,
            reason: "empty response".into(),
        });
    }
    let context = raw.context.ok_or_else(|| missing("context"))?;
    let label = match raw.label {
        None | Some(serde_json::Value::Null) if labeled => return Err(missing("label")),
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => {
            Some(Label::parse(&s).ok_or(DatasetError::UnknownLabel {
                line: line_no,
                label: s,
            })?)
        }
        Some(other) => {
            return Err(DatasetError::UnknownLabel {
                line: line_no,
                label: other.to_string(),
            })
        }
    };
    let id = match raw.id {
        None | Some(serde_json::Value::Null) => line_no.to_string(),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
    };
    Ok(DialogueRecord {
        label,
        response,
        context,
        id,
        provenance: raw.provenance,
    })
}

/// Parses JSONL text. Blank lines are skipped; the first bad line fails the
/// whole parse. Missing ids become the 1-based line number.
pub fn parse_jsonl_str(text: &str, labeled: bool) -> Result<Vec<DialogueRecord>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1, labeled))
        .collect()
}

pub fn parse_jsonl(path: &Path, labeled: bool) -> Result<Vec<DialogueRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl_str(&text, labeled)
}

pub fn to_jsonl(records: &[DialogueRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, records: &[DialogueRecord]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    w.write_all(to_jsonl(records).as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

/// Counts per label, NOT_SARCASM first; unlabeled records are ignored.
pub fn label_counts(records: &[DialogueRecord]) -> [usize; 2] {
    let mut c = [0; 2];
    for l in records.iter().filter_map(|r| r.label) {
        c[l.index()] += 1;
    }
    c
}
