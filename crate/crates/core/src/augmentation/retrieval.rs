use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use super::AugmentError;
use crate::dataset::{tokenize, DialogueRecord, Label, Vocab, CLS, SEP};
use crate::layers::{Encoder, Mode};

/// Maps a response to a fixed-width vector.
pub trait ResponseEncoder: Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Vec<f64>, String>;
}

/// TF-IDF over a fitted term list with smoothed idf
/// `ln((1 + N) / (1 + df)) + 1`; vectors are L2-normalized and terms
/// outside the fitted list are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEncoder {
    terms: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEncoder {
    pub fn fit<S: AsRef<str>>(documents: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in documents {
            let unique: HashSet<String> = tokenize(d.as_ref()).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = documents.len() as f64;
        let idf = df
            .values()
            .map(|&c| ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0)
            .collect();
        let terms = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        Self { terms, idf }
    }
}

impl ResponseEncoder for TfIdfEncoder {
    fn dim(&self) -> usize {
        self.idf.len()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut v = vec![0.0; self.dim()];
        for t in tokenize(text) {
            if let Some(&i) = self.terms.get(&t) {
                v[i] += self.idf[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Mean of the encoder's per-token states over `CLS response SEP`.
#[derive(Debug, Clone)]
pub struct ModelMeanEncoder {
    pub encoder: Encoder<f64>,
    pub vocab: Vocab,
}

impl ResponseEncoder for ModelMeanEncoder {
    fn dim(&self) -> usize {
        self.encoder.config.hidden_dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, String> {
        let room = self.encoder.config.max_seq_len.saturating_sub(2);
        let mut ids = vec![CLS];
        ids.extend(self.vocab.encode(text).into_iter().take(room));
        ids.push(SEP);
        let (h, _) = self
            .encoder
            .forward(&ids, Mode::Eval)
            .map_err(|e| e.to_string())?;
        let rows = h.rows() as f64;
        Ok((0..h.cols())
            .map(|j| (0..h.rows()).map(|t| h.at(t, j)).sum::<f64>() / rows)
            .collect())
    }
}

/// Vectors computed elsewhere, looked up by exact response text.
///
/// JSONL, one object per line: `{"text": "...", "embedding": [f64; E]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRow {
    text: String,
    embedding: Vec<f64>,
}

impl FileEncoder {
    pub fn from_map(vectors: HashMap<String, Vec<f64>>) -> Result<Self, AugmentError> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        if dim == 0 {
            return Err(AugmentError::InvalidArgument(
                "embedding table is empty".into(),
            ));
        }
        for (text, v) in &vectors {
            if v.len() != dim {
                return Err(AugmentError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(AugmentError::NonFinite(format!("embedding of {text:?}")));
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn from_path(path: &Path) -> Result<Self, AugmentError> {
        let io = |source| AugmentError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: FileRow = serde_json::from_str(&line).map_err(|e| {
                AugmentError::InvalidArgument(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            vectors.insert(row.text, row.embedding);
        }
        Self::from_map(vectors)
    }
}

impl ResponseEncoder for FileEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, String> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| "no precomputed embedding for this text".to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub record_id: String,
    pub label: Label,
    pub response: String,
    pub embedding: Vec<f64>,
}

/// Labeled responses and their embeddings, searched by exact scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
    ids: HashSet<String>,
}

impl ResponseIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            norms: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: IndexEntry) -> Result<(), AugmentError> {
        if entry.embedding.len() != self.dim {
            return Err(AugmentError::DimensionMismatch {
                expected: self.dim,
                got: entry.embedding.len(),
            });
        }
        if entry.embedding.iter().any(|x| !x.is_finite()) {
            return Err(AugmentError::NonFinite(format!(
                "embedding of {}",
                entry.record_id
            )));
        }
        if !self.ids.insert(entry.record_id.clone()) {
            return Err(AugmentError::DuplicateId(entry.record_id));
        }
        self.norms.push(norm(&entry.embedding));
        self.entries.push(entry);
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_with_norms(a, norm(a), b, norm(b))
}

/// One entry per record, embedding its response. Every record must carry a
/// label and encode successfully.
pub fn build_response_index(
    records: &[DialogueRecord],
    encoder: &dyn ResponseEncoder,
) -> Result<ResponseIndex, AugmentError> {
    if records.is_empty() {
        return Err(AugmentError::EmptyIndex);
    }
    let embedded = records
        .par_iter()
        .map(|r| {
            let label = r
                .label
                .ok_or_else(|| AugmentError::Unlabeled { id: r.id.clone() })?;
            let embedding = encoder
                .encode(&r.response)
                .map_err(|reason| AugmentError::Encoder {
                    id: r.id.clone(),
                    reason,
                })?;
            Ok(IndexEntry {
                record_id: r.id.clone(),
                label,
                response: r.response.clone(),
                embedding,
            })
        })
        .collect::<Result<Vec<_>, AugmentError>>()?;
    let mut index = ResponseIndex::new(encoder.dim());
    for e in embedded {
        index.push(e)?;
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalCandidate {
    pub record_id: String,
    pub response: String,
    pub label: Label,
    pub cosine: f64,
}

/// Heap entry ordered so that the worst kept candidate is the maximum.
struct Ranked<'a> {
    cosine: f64,
    id: &'a str,
    entry: usize,
}

impl Ranked<'_> {
    /// Better candidates compare as `Less`.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .cosine
            .total_cmp(&self.cosine)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

/// The `k` entries most cosine-similar to `query`, best first; equal
/// cosines are ordered by record id.
pub fn retrieve_topk(
    index: &ResponseIndex,
    query: &[f64],
    k: usize,
) -> Result<Vec<RetrievalCandidate>, AugmentError> {
    if index.is_empty() {
        return Err(AugmentError::EmptyIndex);
    }
    if query.len() != index.dim {
        return Err(AugmentError::DimensionMismatch {
            expected: index.dim,
            got: query.len(),
        });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(AugmentError::NonFinite("query".into()));
    }
    if k == 0 || k > index.len() {
        return Err(AugmentError::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            index.len()
        )));
    }
    let qn = norm(query);
    let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
    for (i, e) in index.entries.iter().enumerate() {
        let r = Ranked {
            cosine: cosine_with_norms(query, qn, &e.embedding, index.norms[i]),
            id: &e.record_id,
            entry: i,
        };
        if heap.len() < k {
            heap.push(r);
        } else if r < *heap.peek().expect("k ≥ 1") {
            heap.pop();
            heap.push(r);
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|r| {
            let e = &index.entries[r.entry];
            RetrievalCandidate {
                record_id: e.record_id.clone(),
                response: e.response.clone(),
                label: e.label,
                cosine: r.cosine,
            }
        })
        .collect())
}
