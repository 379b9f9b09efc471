//! Pipeline configuration: one JSON document, validated in full before any
//! stage runs. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use sarcasm_core::augmentation::{CraConfig, HttpTranslatorConfig, NspTrainConfig};
use sarcasm_core::dataset::{SplitSpec, WindowSize};
use sarcasm_core::layers::{EncoderConfig, ModelConfig};
use sarcasm_core::training::{CyclicLRConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// `encoder.vocab_size` is filled in from the training vocabulary.
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub data: DataConfig,
    pub augmentation: AugmentationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub split: SplitSpec,
    /// Tokens seen fewer times in the training corpus map to UNK.
    pub min_freq: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            min_freq: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    Identity,
    #[default]
    Synonym,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslatorConfig {
    pub kind: TranslatorKind,
    /// Used when `kind` is `http`; the endpoint and key may also come from
    /// the environment.
    pub http: HttpTranslatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseEncoderKind {
    /// TF-IDF fitted on the labeled responses.
    #[default]
    Tfidf,
    /// Mean encoder states of the pair scorer's encoder.
    Model,
    /// Precomputed vectors from `path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseEncoderConfig {
    pub kind: ResponseEncoderKind,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Pivot languages for back-translation.
    pub languages: Vec<String>,
    pub translator: TranslatorConfig,
    pub cra: CraConfig,
    pub nsp: NspTrainConfig,
    pub response_encoder: ResponseEncoderConfig,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            languages: ["fr", "es", "nl"].iter().map(|s| s.to_string()).collect(),
            translator: TranslatorConfig::default(),
            cra: CraConfig::default(),
            nsp: NspTrainConfig::default(),
            response_encoder: ResponseEncoderConfig::default(),
        }
    }
}

fn field_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("config `{field}`: {e}"))
}

impl PipelineConfig {
    /// Sizes and rates that train in minutes on one core.
    pub fn desk() -> Self {
        let mut cfg = Self {
            model: ModelConfig::desk(0),
            ..Self::default()
        };
        cfg.training = TrainConfig {
            max_epochs: 10,
            patience: 10,
            seed: 42,
            lr: CyclicLRConfig {
                base_lr: 2e-3,
                max_lr: 3e-2,
                ..CyclicLRConfig::default()
            },
            // A lone member swings by a few validation examples between
            // seeds; three keep the ensemble's averaging at a third of the cost.
            window_sizes: vec![WindowSize::Turns(1), WindowSize::Turns(2), WindowSize::Max],
            max_grad_norm: 1.0,
            ..TrainConfig::default()
        };
        cfg.data.split.seed = 42;
        cfg.augmentation.nsp = NspTrainConfig {
            encoder: EncoderConfig {
                num_layers: 1,
                hidden_dim: 32,
                num_heads: 4,
                ffn_dim: 64,
                max_seq_len: 48,
                vocab_size: 0,
            },
            max_epochs: 30,
            patience: 30,
            seed: 42,
            lr: CyclicLRConfig {
                base_lr: 1e-2,
                max_lr: 1e-1,
                ..CyclicLRConfig::default()
            },
            max_grad_norm: 5.0,
            ..NspTrainConfig::default()
        };
        cfg
    }

    /// Parses and validates a configuration document; `origin` names it in
    /// error messages.
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            CliError::usage(format!("{origin}: at `{}`: {}", e.path(), e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut model = self.model.clone();
        model.encoder.vocab_size = model.encoder.vocab_size.max(1);
        model.validate().map_err(|e| field_err("model", e.to_string()))?;
        self.training
            .validate()
            .map_err(|e| field_err("training", e.to_string()))?;
        self.data
            .split
            .validate()
            .map_err(|e| field_err("data.split", e.to_string()))?;
        if self.data.min_freq == 0 {
            return Err(field_err("data.min_freq", "must be at least 1"));
        }
        let aug = &self.augmentation;
        aug.cra
            .validate()
            .map_err(|e| field_err("augmentation.cra", e.to_string()))?;
        let nsp = &aug.nsp;
        let mut enc = nsp.encoder.clone();
        enc.vocab_size = enc.vocab_size.max(1);
        enc.validate()
            .map_err(|e| field_err("augmentation.nsp.encoder", e.to_string()))?;
        nsp.lr
            .validate()
            .map_err(|e| field_err("augmentation.nsp.lr", e.to_string()))?;
        if nsp.batch_size == 0 || nsp.max_epochs == 0 || nsp.patience == 0 || nsp.min_freq == 0 {
            return Err(field_err("augmentation.nsp", 
                "batch_size, max_epochs, patience and min_freq must be at least 1",
            ));
        }
        if !(nsp.max_grad_norm.is_finite() && nsp.max_grad_norm >= 0.0) {
            return Err(field_err("augmentation.nsp.max_grad_norm", 
                "must be finite and non-negative",
            ));
        }
        if !(nsp.valid_fraction > 0.0 && nsp.valid_fraction < 1.0) {
            return Err(field_err("augmentation.nsp.valid_fraction", 
                "must lie strictly between 0 and 1",
            ));
        }
        if aug.languages.is_empty() {
            return Err(field_err("augmentation.languages", "must not be empty"));
        }
        if aug.response_encoder.kind == ResponseEncoderKind::File
            && aug.response_encoder.path.is_none()
        {
            return Err(field_err("augmentation.response_encoder.path", 
                "required when kind is `file`",
            ));
        }
        Ok(())
    }
}
