use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    classify, classify_backward, cross_entropy, pool, pool_backward, BiLstm, BiLstmCache,
    BiLstmConfig, Classifier, Encoder, EncoderCache, EncoderConfig, Linear, Mode, ModelError,
    NextVlad, NextVladCache, NextVladConfig, Reduce, CLASS_COUNT,
};
use crate::params::{assign_named, tensor_fields, Parameters};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    NextVlad,
    Max,
    Mean,
}

impl PoolingMode {
    pub const ALL: [PoolingMode; 3] = [PoolingMode::NextVlad, PoolingMode::Max, PoolingMode::Mean];

    pub fn name(self) -> &'static str {
        match self {
            PoolingMode::NextVlad => "nextvlad",
            PoolingMode::Max => "max",
            PoolingMode::Mean => "mean",
        }
    }
}

/// Pooling settings; the NeXtVLAD fields are ignored by max/mean pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolingConfig {
    pub mode: PoolingMode,
    pub groups: usize,
    pub expansion: usize,
    pub clusters: usize,
    /// Dimension of the projected VLAD descriptor.
    pub output_dim: usize,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            mode: PoolingMode::NextVlad,
            groups: 8,
            expansion: 4,
            clusters: 16,
            output_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub bilstm: BiLstmConfig,
    pub pooling: PoolingConfig,
}

impl ModelConfig {
    /// The full-size setting: a 24-layer, 1024-wide, 16-head encoder, a
    /// 2-layer 1024-unit BiLSTM with 0.25 dropout, and NeXtVLAD with 8
    /// groups, expansion 4, 128 clusters and a 512-wide projection.
    ///
    /// Far too large to train here; kept as a reference point.
    pub fn full_scale(vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                num_layers: 24,
                hidden_dim: 1024,
                num_heads: 16,
                ffn_dim: 4096,
                max_seq_len: 512,
                vocab_size,
            },
            bilstm: BiLstmConfig {
                num_layers: 2,
                hidden_dim: 1024,
                dropout: 0.25,
            },
            pooling: PoolingConfig {
                mode: PoolingMode::NextVlad,
                groups: 8,
                expansion: 4,
                clusters: 128,
                output_dim: 512,
            },
        }
    }

    /// A size that trains in seconds per epoch on one core: a 2-layer,
    /// 32-wide encoder, a 2-layer 32-unit BiLSTM and NeXtVLAD with 4 groups,
    /// expansion 2, 8 clusters and a 32-wide projection.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            encoder: EncoderConfig {
                num_layers: 2,
                hidden_dim: 32,
                num_heads: 4,
                ffn_dim: 64,
                max_seq_len: 48,
                vocab_size,
            },
            bilstm: BiLstmConfig {
                num_layers: 2,
                hidden_dim: 32,
                dropout: 0.25,
            },
            pooling: PoolingConfig {
                mode: PoolingMode::NextVlad,
                groups: 4,
                expansion: 2,
                clusters: 8,
                output_dim: 32,
            },
        }
    }

    pub fn nextvlad(&self) -> NextVladConfig {
        NextVladConfig {
            input_dim: self.bilstm.output_dim(),
            expansion: self.pooling.expansion,
            groups: self.pooling.groups,
            clusters: self.pooling.clusters,
            output_dim: self.pooling.output_dim,
        }
    }

    /// Width of the vector fed to the classifier head.
    pub fn pooled_dim(&self) -> usize {
        match self.pooling.mode {
            PoolingMode::NextVlad => self.pooling.output_dim,
            PoolingMode::Max | PoolingMode::Mean => self.bilstm.output_dim(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.bilstm.validate()?;
        if self.pooling.mode == PoolingMode::NextVlad {
            self.nextvlad().validate()?;
        }
        Ok(())
    }
}

/// Model input: token ids for the built-in encoder, or precomputed
/// per-token states (`T×D`) that bypass it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput<T> {
    Tokens(Vec<u32>),
    Embedded(Tensor<T>),
}

#[derive(Debug, Clone)]
enum PoolCache<T> {
    NextVlad(NextVladCache<T>),
    Reduce { steps: usize, argmax: Vec<usize> },
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub probs: Tensor<T>,
    pub pooled: Tensor<T>,
    encoder: Option<EncoderCache<T>>,
    bilstm: BiLstmCache<T>,
    pool: PoolCache<T>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn nextvlad_cache(&self) -> Option<&NextVladCache<T>> {
        match &self.pool {
            PoolCache::NextVlad(c) => Some(c),
            PoolCache::Reduce { .. } => None,
        }
    }
}

/// Encoder → BiLSTM → pooling → softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SarcasmModel<T> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub bilstm: BiLstm<T>,
    pub nextvlad: Option<NextVlad<T>>,
    pub head: Classifier<T>,
}

tensor_fields!(SarcasmModel {
    encoder,
    bilstm,
    nextvlad,
    head
});

/// Named parameter tensors plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> SarcasmModel<T> {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let encoder = Encoder::new(&config.encoder, rng)?;
        let bilstm = BiLstm::new(config.encoder.hidden_dim, &config.bilstm, rng)?;
        let nextvlad = match config.pooling.mode {
            PoolingMode::NextVlad => Some(NextVlad::new(&config.nextvlad(), rng)?),
            PoolingMode::Max | PoolingMode::Mean => None,
        };
        let head = Linear::new(config.pooled_dim(), CLASS_COUNT, rng);
        Ok(Self {
            config: config.clone(),
            encoder,
            bilstm,
            nextvlad,
            head,
        })
    }

    /// Initialization from a seed, through ChaCha8.
    pub fn seeded(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Self::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Zeroes the classifier head so every input starts at `[0.5, 0.5]`.
    pub fn with_zero_head(mut self) -> Self {
        self.head.weight.fill(T::zero());
        self.head.bias.fill(T::zero());
        self
    }

    pub fn forward(
        &self,
        input: &ModelInput<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardPass<T>, ModelError> {
        let (states, encoder) = match input {
            ModelInput::Tokens(ids) => {
                let (h, c) = self.encoder.forward(ids, mode)?;
                (h, Some(c))
            }
            ModelInput::Embedded(h) => (h.clone(), None),
        };
        let (seq, bilstm) = self.bilstm.forward(&states, mode, rng)?;
        let (pooled, pool) = match (&self.nextvlad, self.config.pooling.mode) {
            (Some(vlad), _) => {
                let (v, c) = vlad.forward(&seq)?;
                (v, PoolCache::NextVlad(c))
            }
            (None, mode) => {
                let reduce = if mode == PoolingMode::Max {
                    Reduce::Max
                } else {
                    Reduce::Mean
                };
                let (v, argmax) = pool(&seq, reduce)?;
                (
                    v,
                    PoolCache::Reduce {
                        steps: seq.rows(),
                        argmax,
                    },
                )
            }
        };
        let probs = classify(&pooled, &self.head)?;
        Ok(ForwardPass {
            probs,
            pooled,
            encoder,
            bilstm,
            pool,
        })
    }

    /// Class probabilities in eval mode.
    pub fn predict(&self, input: &ModelInput<T>) -> Result<Tensor<T>, ModelError> {
        // Eval mode draws nothing from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.probs)
    }

    pub fn loss(&self, input: &ModelInput<T>, gold: usize) -> Result<T, ModelError> {
        Ok(cross_entropy(&self.predict(input)?, gold))
    }

    /// Accumulates the gradient of the cross-entropy loss for `gold` into
    /// `grad` and returns the loss. Encoder gradients are skipped when
    /// `train_encoder` is false or the input bypassed the encoder.
    pub fn backward(
        &self,
        pass: &ForwardPass<T>,
        gold: usize,
        grad: &mut Self,
        train_encoder: bool,
    ) -> Result<T, ModelError> {
        let loss = cross_entropy(&pass.probs, gold);
        let dpooled =
            classify_backward(&pass.pooled, &pass.probs, gold, &self.head, &mut grad.head)?;
        let dseq = match (&pass.pool, &self.nextvlad, &mut grad.nextvlad) {
            (PoolCache::NextVlad(c), Some(vlad), Some(g)) => vlad.backward(c, &dpooled, g)?,
            (PoolCache::Reduce { steps, argmax }, None, None) => {
                let reduce = if self.config.pooling.mode == PoolingMode::Max {
                    Reduce::Max
                } else {
                    Reduce::Mean
                };
                pool_backward(*steps, argmax, &dpooled, reduce)
            }
            _ => {
                return Err(ModelError::Params(
                    "gradient layout does not match model".into(),
                ))
            }
        };
        let dstates = self
            .bilstm
            .backward(&pass.bilstm, &dseq, &mut grad.bilstm)?;
        if let (true, Some(c)) = (train_encoder, &pass.encoder) {
            self.encoder.backward(c, &dstates, &mut grad.encoder)?;
        }
        Ok(loss)
    }

    pub fn to_params(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    /// Rebuilds a model, requiring exactly the parameter names and shapes
    /// the configuration implies.
    pub fn from_params(params: &ModelParams<T>) -> Result<Self, ModelError> {
        let mut model = Self::new(&params.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        assign_named(&mut model, &params.tensors).map_err(ModelError::Params)?;
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> SarcasmModel<U> {
        let params = self.to_params();
        let cast = ModelParams {
            config: params.config,
            tensors: params
                .tensors
                .into_iter()
                .map(|(k, v)| (k, v.cast()))
                .collect(),
        };
        SarcasmModel::from_params(&cast).expect("same layout")
    }
}
