use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::dataset::{build_vocab, split, DialogueRecord, SplitSpec, Vocab, SEP};
use crate::layers::{Encoder, EncoderCache, EncoderConfig, Mode, ModelConfig, ModelError, ModelParams};
use crate::params::{assign_named, tensor_fields, Parameters};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::training::{cyclic_lr, CyclicLRConfig, MomentumSgd, TrainError};

/// Bilinear pair score over the jointly encoded sequence:
/// `z = uᵀ B v + c·u + r·v + b`, where `u` and `v` are the mean encoder
/// states of the last context turn (through its SEP) and of the response.
/// Earlier turns reach `u` only through attention.
#[derive(Debug, Clone, PartialEq)]
pub struct NspHead<T> {
    pub bilinear: Tensor<T>,
    pub context: Tensor<T>,
    pub response: Tensor<T>,
    pub bias: Tensor<T>,
}

tensor_fields!(NspHead {
    bilinear,
    context,
    response,
    bias
});

impl<T: Scalar> NspHead<T> {
    fn zeros(dim: usize) -> Self {
        Self {
            bilinear: Tensor::zeros(&[dim, dim]),
            context: Tensor::zeros(&[dim]),
            response: Tensor::zeros(&[dim]),
            bias: Tensor::zeros(&[1]),
        }
    }
}

/// Transformer encoder over `CLS, context…, SEP, response, SEP` with a
/// pair-scoring head.
#[derive(Debug, Clone, PartialEq)]
pub struct NspModel<T> {
    pub encoder: Encoder<T>,
    pub head: NspHead<T>,
}

tensor_fields!(NspModel { encoder, head });

pub struct NspCache<T> {
    encoder: EncoderCache<T>,
    context: std::ops::Range<usize>,
    response: std::ops::Range<usize>,
    u: Vec<T>,
    v: Vec<T>,
    logit: T,
}

/// Last context turn `[p, s]` and response `(s, len)`, where `s` is the SEP
/// before the response and `p` follows the SEP before that (or is CLS).
/// Without a context SEP the context segment is CLS alone.
fn segments(ids: &[u32]) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let last = ids.len() - 1;
    let s = ids[..last].iter().rposition(|&t| t == SEP).unwrap_or(0);
    let start = ids[..s].iter().rposition(|&t| t == SEP).map_or(0, |p| p + 1);
    (start..s + 1, s + 1..ids.len())
}

fn mean_rows<T: Scalar>(h: &Tensor<T>, rows: std::ops::Range<usize>) -> Vec<T> {
    let n = T::of(rows.len() as f64);
    (0..h.cols())
        .map(|j| rows.clone().map(|t| h.at(t, j)).sum::<T>() / n)
        .collect()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `−ln σ(z)` for a positive pair, `−ln(1 − σ(z))` for a negative one.
fn pair_loss<T: Scalar>(z: T, follows: bool) -> T {
    let softplus = |x: T| x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln();
    if follows {
        softplus(-z)
    } else {
        softplus(z)
    }
}

impl<T: Scalar> NspModel<T> {
    /// Random encoder, zero head: every pair starts at probability 0.5.
    pub fn seeded(config: &EncoderConfig, seed: u64) -> Result<Self, ModelError> {
        let encoder = Encoder::new(config, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(Self {
            head: NspHead::zeros(config.hidden_dim),
            encoder,
        })
    }

    pub fn forward(&self, ids: &[u32]) -> Result<NspCache<T>, ModelError> {
        if ids.len() < 2 {
            return Err(ModelError::EmptySequence);
        }
        let (h, encoder) = self.encoder.forward(ids, Mode::Eval)?;
        let (context, response) = segments(ids);
        let u = mean_rows(&h, context.clone());
        let v = mean_rows(&h, response.clone());
        let d = u.len();
        let b = &self.head.bilinear;
        let mut logit = self.head.bias.data()[0];
        for i in 0..d {
            let bv: T = (0..d).map(|j| b.at(i, j) * v[j]).sum();
            logit += u[i] * (bv + self.head.context.data()[i]) + self.head.response.data()[i] * v[i];
        }
        Ok(NspCache {
            encoder,
            context,
            response,
            u,
            v,
            logit,
        })
    }

    /// Probability that the response follows the context.
    pub fn probability(&self, ids: &[u32]) -> Result<T, ModelError> {
        Ok(sigmoid(self.forward(ids)?.logit))
    }

    pub fn loss(&self, ids: &[u32], follows: bool) -> Result<T, ModelError> {
        Ok(pair_loss(self.forward(ids)?.logit, follows))
    }

    /// Accumulates the loss gradient into `grad` and returns the loss.
    pub fn backward(&self, c: &NspCache<T>, follows: bool, grad: &mut Self) -> Result<T, ModelError> {
        let y = if follows { T::one() } else { T::zero() };
        let dz = sigmoid(c.logit) - y;
        let d = c.u.len();
        let b = &self.head.bilinear;
        let mut du = vec![T::zero(); d];
        let mut dv = vec![T::zero(); d];
        for i in 0..d {
            for j in 0..d {
                let g = &mut grad.head.bilinear.data_mut()[i * d + j];
                *g += dz * c.u[i] * c.v[j];
                du[i] += dz * b.at(i, j) * c.v[j];
                dv[j] += dz * b.at(i, j) * c.u[i];
            }
            du[i] += dz * self.head.context.data()[i];
            dv[i] += dz * self.head.response.data()[i];
            grad.head.context.data_mut()[i] += dz * c.u[i];
            grad.head.response.data_mut()[i] += dz * c.v[i];
        }
        grad.head.bias.data_mut()[0] += dz;
        let steps = c.context.end.max(c.response.end);
        let mut dh = Tensor::zeros(&[steps, d]);
        for (range, dseg) in [(&c.context, &du), (&c.response, &dv)] {
            let n = T::of(range.len() as f64);
            for t in range.clone() {
                for (x, &g) in dh.row_mut(t).iter_mut().zip(dseg.iter()) {
                    *x += g / n;
                }
            }
        }
        self.encoder.backward(&c.encoder, &dh, &mut grad.encoder)?;
        Ok(pair_loss(c.logit, follows))
    }

    /// Checkpoint form: the encoder configuration travels as the model
    /// configuration's encoder section.
    pub fn to_params(&self) -> ModelParams<T> {
        ModelParams {
            config: ModelConfig {
                encoder: self.encoder.config.clone(),
                ..ModelConfig::default()
            },
            tensors: self
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    pub fn from_params(params: &ModelParams<T>) -> Result<Self, ModelError> {
        let mut model = Self::seeded(&params.config.encoder, 0)?;
        assign_named(&mut model, &params.tensors).map_err(ModelError::Params)?;
        Ok(model)
    }
}

/// A trained pair model with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NspScorer {
    pub model: NspModel<f64>,
    pub vocab: Vocab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NspScore {
    pub confidence: f64,
    /// Old context tokens were dropped to fit the encoder.
    pub truncated: bool,
}

impl NspScorer {
    /// Zero head: scores every pair 0.5.
    pub fn untrained(config: &EncoderConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        let config = EncoderConfig {
            vocab_size: vocab.len(),
            ..config.clone()
        };
        Ok(Self {
            model: NspModel::seeded(&config, seed)?,
            vocab,
        })
    }

    pub fn encode(&self, context: &[String], candidate: &str) -> (Vec<u32>, bool) {
        let e = self
            .vocab
            .format_input(context, candidate, self.model.encoder.config.max_seq_len);
        (e.ids, e.truncated)
    }

    /// Probability that `candidate` follows `context`.
    pub fn score(&self, context: &[String], candidate: &str) -> Result<NspScore, ModelError> {
        let (ids, truncated) = self.encode(context, candidate);
        Ok(NspScore {
            confidence: self.model.probability(&ids)?,
            truncated,
        })
    }

    /// Checkpoint extra metadata tag.
    pub const KIND: &'static str = "nsp";

    pub fn checkpoint_extra(&self) -> serde_json::Value {
        serde_json::json!({ "kind": Self::KIND, "vocab": self.vocab })
    }

    pub fn from_checkpoint(params: &ModelParams<f64>, extra: &serde_json::Value) -> Result<Self, ModelError> {
        if extra.get("kind").and_then(|k| k.as_str()) != Some(Self::KIND) {
            return Err(ModelError::Params("checkpoint is not a pair scorer".into()));
        }
        let vocab: Vocab = serde_json::from_value(extra["vocab"].clone())
            .map_err(|e| ModelError::Params(format!("vocab: {e}")))?;
        let model = NspModel::from_params(params)?;
        if model.encoder.config.vocab_size != vocab.len() {
            return Err(ModelError::Params("vocabulary size does not match encoder".into()));
        }
        Ok(Self { model, vocab })
    }
}

/// A context with a candidate response and whether it is the true one.
#[derive(Debug, Clone, PartialEq)]
pub struct NspPair {
    pub context_id: String,
    pub context: Vec<String>,
    pub response: String,
    pub follows: bool,
}

/// One positive (own response) and one negative per `contexts` record. The
/// negative response is drawn uniformly from the other records of `pool`
/// whose response text differs.
pub fn nsp_pairs(
    contexts: &[DialogueRecord],
    pool: &[DialogueRecord],
    seed: u64,
) -> Result<Vec<NspPair>, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * contexts.len());
    for r in contexts {
        let others: Vec<&DialogueRecord> = pool
            .iter()
            .filter(|o| o.id != r.id && o.response != r.response)
            .collect();
        let neg = others.choose(&mut rng).ok_or(AugmentError::DegenerateCorpus)?;
        out.push(NspPair {
            context_id: r.id.clone(),
            context: r.context.clone(),
            response: r.response.clone(),
            follows: true,
        });
        out.push(NspPair {
            context_id: r.id.clone(),
            context: r.context.clone(),
            response: neg.response.clone(),
            follows: false,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NspTrainConfig {
    /// `vocab_size` is taken from the vocabulary built over the dialogues.
    pub encoder: EncoderConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lr: CyclicLRConfig,
    /// Share of dialogues held out for pair accuracy.
    pub valid_fraction: f64,
    pub min_freq: usize,
    /// Batch gradients with a larger global L2 norm are rescaled to it;
    /// `0` disables clipping.
    pub max_grad_norm: f64,
}

impl Default for NspTrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            batch_size: 4,
            max_epochs: 10,
            patience: 3,
            seed: 0,
            lr: CyclicLRConfig::default(),
            valid_fraction: 0.2,
            min_freq: 1,
            max_grad_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
    pub lr_min: f64,
    pub lr_max: f64,
}

#[derive(Debug, Clone)]
pub struct NspTrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub scorer: NspScorer,
    pub best_epoch: usize,
    pub valid_accuracy: f64,
    /// Mean training loss before the first update.
    pub initial_loss: f64,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub history: Vec<NspEpoch>,
}

struct Encoded {
    ids: Vec<u32>,
    follows: bool,
}

fn accuracy(model: &NspModel<f64>, data: &[Encoded]) -> Result<f64, ModelError> {
    let hits = data
        .par_iter()
        .map(|e| Ok((model.probability(&e.ids)? > 0.5) == e.follows))
        .collect::<Result<Vec<bool>, ModelError>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

/// Trains a pair scorer on true and sampled continuations. Dialogues are
/// split by record before pairing, so validation contexts are unseen;
/// negatives for either side may come from any dialogue.
pub fn train_nsp_scorer(
    dialogues: &[DialogueRecord],
    cfg: &NspTrainConfig,
) -> Result<NspTrainOutcome, AugmentError> {
    if dialogues.len() < 2 {
        return Err(AugmentError::InvalidArgument(
            "pair training needs at least two dialogues".into(),
        ));
    }
    if !(cfg.max_grad_norm >= 0.0 && cfg.max_grad_norm.is_finite()) {
        return Err(TrainError::Config("max_grad_norm must be finite and non-negative".into()).into());
    }
    if cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 {
        return Err(TrainError::Config(
            "batch_size, patience and max_epochs must be at least 1".into(),
        )
        .into());
    }
    cfg.lr.validate()?;
    let (train_recs, valid_recs) = split(
        dialogues,
        &SplitSpec {
            train_fraction: 1.0 - cfg.valid_fraction,
            seed: cfg.seed,
            stratify: false,
        },
    )
    .map_err(|e| AugmentError::InvalidArgument(e.to_string()))?;
    let vocab = build_vocab(&train_recs, cfg.min_freq)
        .map_err(|e| AugmentError::InvalidArgument(e.to_string()))?;
    let scorer = NspScorer::untrained(&cfg.encoder, vocab, cfg.seed)?;
    let encode = |pairs: Vec<NspPair>| -> Vec<Encoded> {
        pairs
            .into_iter()
            .map(|p| Encoded {
                ids: scorer.encode(&p.context, &p.response).0,
                follows: p.follows,
            })
            .collect()
    };
    // Validation negatives are fixed; training negatives are redrawn every
    // epoch so individual negative pairs cannot be memorized.
    let valid_data = encode(nsp_pairs(&valid_recs, dialogues, cfg.seed.wrapping_add(1))?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train_data = encode(nsp_pairs(&train_recs, dialogues, rng.gen())?);

    let mut model = scorer.model.clone();
    let initial_loss = train_data
        .par_iter()
        .map(|e| model.loss(&e.ids, e.follows))
        .collect::<Result<Vec<f64>, ModelError>>()?
        .iter()
        .sum::<f64>()
        / train_data.len() as f64;

    let lr_cfg = cfg.lr.resolve(train_data.len().div_ceil(cfg.batch_size));
    let mut opt = MomentumSgd::new(&model);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut iteration = 0usize;
    let mut history = Vec::new();
    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        if epoch > 1 {
            train_data = encode(nsp_pairs(&train_recs, dialogues, rng.gen())?);
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let (mut lr_min, mut lr_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for batch in order.chunks(cfg.batch_size) {
            let per_sample = batch
                .par_iter()
                .map(|&i| {
                    let e = &train_data[i];
                    let c = model.forward(&e.ids)?;
                    let mut g = model.zeroed();
                    let loss = model.backward(&c, e.follows, &mut g)?;
                    Ok((loss, g))
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            let mut grad = model.zeroed();
            let mut batch_loss = 0.0;
            for (loss, g) in &per_sample {
                batch_loss += loss;
                grad.axpy_params(1.0, g);
            }
            let n = batch.len() as f64;
            batch_loss /= n;
            grad.scale_params(1.0 / n);
            if cfg.max_grad_norm > 0.0 {
                grad.clip_global_norm(cfg.max_grad_norm);
            }
            let (lr, momentum) = cyclic_lr(iteration, &lr_cfg);
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    iteration,
                    lr,
                    momentum,
                    loss: batch_loss,
                }
                .into());
            }
            opt.step(&mut model, &grad, lr, momentum);
            lr_min = lr_min.min(lr);
            lr_max = lr_max.max(lr);
            loss_sum += batch_loss * n;
            iteration += 1;
        }
        let acc = accuracy(&model, &valid_data)?;
        history.push(NspEpoch {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            valid_accuracy: acc,
            lr_min,
            lr_max,
        });
        if acc > best.2 {
            best = (model.clone(), epoch, acc);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(NspTrainOutcome {
        scorer: NspScorer {
            model: best.0,
            vocab: scorer.vocab,
        },
        best_epoch: best.1,
        valid_accuracy: best.2,
        initial_loss,
        train_pairs: train_data.len(),
        valid_pairs: valid_data.len(),
        history,
    })
}

/// Names and shapes of an NSP model's tensors, for inspection.
pub fn nsp_param_shapes(model: &NspModel<f64>) -> BTreeMap<String, Vec<usize>> {
    model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{grad_check, GradCheckConfig};

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 16,
            vocab_size: 12,
        }
    }

    #[test]
    fn segments_split_at_last_context_sep() {
        // CLS a SEP b SEP r r SEP
        let ids = [2, 5, SEP, 6, SEP, 7, 8, SEP];
        assert_eq!(segments(&ids), (3..5, 5..8));
        // One turn: CLS a a SEP r SEP
        assert_eq!(segments(&[2, 5, 6, SEP, 7, SEP]), (0..4, 4..6));
        // No context: CLS r SEP
        assert_eq!(segments(&[2, 7, SEP]), (0..1, 1..3));
    }

    #[test]
    fn zero_head_scores_one_half() {
        let m: NspModel<f64> = NspModel::seeded(&tiny(), 1).unwrap();
        assert_eq!(m.probability(&[2, 5, SEP, 7, SEP]).unwrap(), 0.5);
        assert!((m.loss(&[2, 5, SEP, 7, SEP], true).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m: NspModel<f64> = NspModel::seeded(&tiny(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        m.visit_mut("head", &mut |_, t| {
            t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5))
        });
        let ids = [2u32, 5, 6, SEP, 9, SEP, 7, 8, 11, SEP];
        for follows in [true, false] {
            let c = m.forward(&ids).unwrap();
            let mut g = m.zeroed();
            m.backward(&c, follows, &mut g).unwrap();
            let reports = grad_check(
                &mut m,
                &g,
                |p: &NspModel<f64>| p.loss(&ids, follows).unwrap(),
                GradCheckConfig::default(),
            )
            .unwrap();
            for r in reports {
                assert!(r.passed, "{r:?}");
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let m: NspModel<f64> = NspModel::seeded(&tiny(), 5).unwrap();
        let back = NspModel::from_params(&m.to_params()).unwrap();
        assert_eq!(back, m);
        assert_eq!(nsp_param_shapes(&m)["head.bilinear"], vec![8, 8]);
    }
}
