use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_fresh_ids, AugmentError};
use crate::dataset::{label_counts, AugmentMethod, DialogueRecord, Label, Provenance};

/// Environment variable holding the translation service URL.
pub const ENDPOINT_VAR: &str = "TRANSLATOR_ENDPOINT";
/// Environment variable holding the translation service key.
pub const API_KEY_VAR: &str = "TRANSLATOR_API_KEY";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslateError {
    #[error("unsupported language {0}")]
    Unsupported(String),
    #[error("translation service: {0}")]
    Service(String),
    #[error("translation response: {0}")]
    Decode(String),
    #[error("translator configuration: {0}")]
    Config(String),
}

/// Text translation between language codes such as `en` and `fr`.
pub trait Translator: Sync {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String, TranslateError>;

    /// English → `language` → English.
    fn round_trip(&self, text: &str, language: &str) -> Result<String, TranslateError> {
        let there = self.translate(text, "en", language)?;
        self.translate(&there, language, "en")
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _from: &str, _to: &str) -> Result<String, TranslateError> {
        Ok(text.to_string())
    }
}

/// Deterministic stand-in for a translation service. Going out to a
/// language is the identity; coming back replaces words through that
/// language's synonym table, so each language yields its own paraphrase.
/// Languages without a table fail.
#[derive(Debug, Clone)]
pub struct SynonymTranslator {
    tables: BTreeMap<String, BTreeMap<String, String>>,
}

impl SynonymTranslator {
    pub fn new(tables: BTreeMap<String, BTreeMap<String, String>>) -> Self {
        Self { tables }
    }

    pub fn languages(&self) -> Vec<&str> {
        self.tables.keys().map(String::as_str).collect()
    }
}

impl Default for SynonymTranslator {
    /// Tables for `fr`, `es` and `nl`.
    fn default() -> Self {
        let table = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect::<BTreeMap<_, _>>()
        };
        let mut tables = BTreeMap::new();
        tables.insert(
            "fr".to_string(),
            table(&[
                ("great", "excellent"),
                ("good", "fine"),
                ("this", "that"),
                ("really", "truly"),
                ("love", "adore"),
                ("day", "journey"),
                ("night", "evening"),
                ("the", "la"),
                ("was", "has been"),
                ("is", "'s"),
            ]),
        );
        tables.insert(
            "es".to_string(),
            table(&[
                ("great", "wonderful"),
                ("good", "nice"),
                ("really", "very"),
                ("love", "like"),
                ("day", "daytime"),
                ("night", "nighttime"),
                ("the", "el"),
                ("was", "stayed"),
                ("is", "remains"),
            ]),
        );
        tables.insert(
            "nl".to_string(),
            table(&[
                ("great", "terrific"),
                ("good", "decent"),
                ("this", "dit"),
                ("really", "echt"),
                ("love", "enjoy"),
                ("day", "dag"),
                ("night", "nacht"),
                ("the", "de"),
                ("was", "got"),
                ("is", "seems"),
            ]),
        );
        Self { tables }
    }
}

impl Translator for SynonymTranslator {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String, TranslateError> {
        let foreign = if from == "en" { to } else { from };
        let table = self
            .tables
            .get(foreign)
            .ok_or_else(|| TranslateError::Unsupported(foreign.to_string()))?;
        if to != "en" {
            return Ok(text.to_string());
        }
        Ok(text
            .split(' ')
            .map(|w| table.get(w).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpTranslatorConfig {
    pub endpoint: String,
    /// Sent as a bearer token when present.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    /// Extra attempts after a transport error, 429 or 5xx.
    pub retries: u32,
}

impl Default for HttpTranslatorConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key: None,
            timeout_secs: 10.0,
            retries: 2,
        }
    }
}

/// Client for a JSON translation service: `POST {endpoint}` with
/// `{"text", "source", "target"}`, answered by `{"translation"}`.
pub struct HttpTranslator {
    config: HttpTranslatorConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    translation: String,
}

impl HttpTranslator {
    pub fn new(config: HttpTranslatorConfig) -> Result<Self, TranslateError> {
        if config.endpoint.is_empty() {
            return Err(TranslateError::Config("endpoint is empty".into()));
        }
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(TranslateError::Config("timeout_secs must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    /// Endpoint and key from the environment; the endpoint in `base` is
    /// used when the variable is unset.
    pub fn from_env(mut base: HttpTranslatorConfig) -> Result<Self, TranslateError> {
        if let Ok(endpoint) = std::env::var(ENDPOINT_VAR) {
            base.endpoint = endpoint;
        }
        base.api_key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        if base.endpoint.is_empty() {
            return Err(TranslateError::Config(format!("{ENDPOINT_VAR} is not set")));
        }
        Self::new(base)
    }

    fn attempt(&self, body: &HttpRequest<'_>) -> Result<String, (bool, TranslateError)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| (true, TranslateError::Service(e.to_string())))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((retry, TranslateError::Service(format!("http status {status}"))));
        }
        resp.body_mut()
            .read_json::<HttpResponse>()
            .map(|r| r.translation)
            .map_err(|e| (false, TranslateError::Decode(e.to_string())))
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String, TranslateError> {
        let body = HttpRequest {
            text,
            source: from,
            target: to,
        };
        let mut last = None;
        for _ in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(t) => return Ok(t),
                Err((retry, e)) => {
                    last = Some(e);
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paraphrase {
    pub source_index: usize,
    pub language: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationFailure {
    pub source_index: usize,
    pub language: String,
    pub error: TranslateError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackTranslation {
    /// Ordered by source index, then by position in `languages`.
    pub paraphrases: Vec<Paraphrase>,
    pub failures: Vec<TranslationFailure>,
}

/// Round-trips every text through every language. Paraphrases equal to
/// their source, or to an earlier paraphrase of the same source, are
/// dropped. Failures are recorded per item; the call fails only when every
/// attempt failed.
pub fn back_translate(
    texts: &[String],
    languages: &[String],
    translator: &dyn Translator,
) -> Result<BackTranslation, AugmentError> {
    if languages.is_empty() {
        return Err(AugmentError::InvalidArgument(
            "back-translation needs at least one language".into(),
        ));
    }
    let jobs: Vec<(usize, &String)> = (0..texts.len())
        .flat_map(|i| languages.iter().map(move |l| (i, l)))
        .collect();
    let results: Vec<Result<String, TranslateError>> = jobs
        .par_iter()
        .map(|&(i, lang)| translator.round_trip(&texts[i], lang))
        .collect();
    let mut out = BackTranslation::default();
    let mut seen: HashSet<(usize, String)> = HashSet::new();
    for (&(i, lang), result) in jobs.iter().zip(results) {
        match result {
            Ok(text) => {
                if text != texts[i] && seen.insert((i, text.clone())) {
                    out.paraphrases.push(Paraphrase {
                        source_index: i,
                        language: lang.clone(),
                        text,
                    });
                }
            }
            Err(error) => out.failures.push(TranslationFailure {
                source_index: i,
                language: lang.clone(),
                error,
            }),
        }
    }
    if !jobs.is_empty() && out.failures.len() == jobs.len() {
        return Err(AugmentError::AllTranslationsFailed {
            attempts: jobs.len(),
            first: out.failures.swap_remove(0).error,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    /// The input records followed by the appended positives.
    pub records: Vec<DialogueRecord>,
    pub added: usize,
    /// NOT_SARCASM minus SARCASM after balancing, floored at zero.
    pub residual_imbalance: usize,
    pub failures: Vec<TranslationFailure>,
}

/// Appends back-translated copies of SARCASM records (context unchanged)
/// until the classes are even or paraphrases run out. Paraphrases are
/// taken language by language, each pass walking the sarcastic records in
/// input order. Ids are `{source}#bt-{language}`.
pub fn balance_with_positives(
    records: &[DialogueRecord],
    languages: &[String],
    translator: &dyn Translator,
) -> Result<BalanceOutcome, AugmentError> {
    if let Some(r) = records.iter().find(|r| r.label.is_none()) {
        return Err(AugmentError::Unlabeled { id: r.id.clone() });
    }
    let [neg, pos] = label_counts(records);
    let deficit = neg.saturating_sub(pos);
    if deficit == 0 {
        return Ok(BalanceOutcome {
            records: records.to_vec(),
            added: 0,
            residual_imbalance: 0,
            failures: Vec::new(),
        });
    }
    let sarcastic: Vec<&DialogueRecord> = records
        .iter()
        .filter(|r| r.label == Some(Label::Sarcasm))
        .collect();
    let texts: Vec<String> = sarcastic.iter().map(|r| r.response.clone()).collect();
    let bt = back_translate(&texts, languages, translator)?;
    let mut by_language: Vec<&Paraphrase> = bt.paraphrases.iter().collect();
    let lang_rank = |l: &str| languages.iter().position(|x| x == l).expect("known language");
    by_language.sort_by_key(|p| (lang_rank(&p.language), p.source_index));
    let added: Vec<DialogueRecord> = by_language
        .into_iter()
        .take(deficit)
        .map(|p| {
            let src = sarcastic[p.source_index];
            let mut rec = DialogueRecord::new(
                format!("{}#bt-{}", src.id, p.language),
                src.context.clone(),
                p.text.clone(),
                Some(Label::Sarcasm),
            );
            rec.provenance = Some(Provenance {
                source_id: src.id.clone(),
                method: AugmentMethod::BackTranslation,
                cosine: None,
                nsp_confidence: None,
                candidate_id: None,
                language: Some(p.language.clone()),
            });
            rec
        })
        .collect();
    check_fresh_ids(records, &added)?;
    let n_added = added.len();
    let mut all = records.to_vec();
    all.extend(added);
    Ok(BalanceOutcome {
        records: all,
        added: n_added,
        residual_imbalance: deficit - n_added,
        failures: bt.failures,
    })
}
