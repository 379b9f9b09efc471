use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Linear, Mode, ModelError};
use crate::params::tensor_fields;
use crate::scalar::Scalar;
use crate::tensor::{
    elementwise, elementwise_backward, matmul, matmul_nt, matmul_tn, softmax, softmax_backward,
    Activation, Tensor,
};

const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    /// Filled in from the vocabulary when left at zero in a config file.
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 256,
            max_seq_len: 128,
            vocab_size: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_seq_len", self.max_seq_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!(
                    "encoder.{name} must be positive"
                )));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::Config(format!(
                "encoder.hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

/// Row-wise layer normalization with learned gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

tensor_fields!(LayerNorm { gamma, beta });

#[derive(Debug, Clone)]
struct LayerNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::full(&[dim], T::one()),
            beta: Tensor::zeros(&[dim]),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, LayerNormCache<T>) {
        let d = x.cols();
        let n = T::of(d as f64);
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = xhat.row_mut(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + T::of(LAYER_NORM_EPS)).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let mut y = xhat.clone();
        for i in 0..y.rows() {
            for ((v, &g), &b) in y
                .row_mut(i)
                .iter_mut()
                .zip(self.gamma.data())
                .zip(self.beta.data())
            {
                *v = *v * g + b;
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    fn backward(&self, cache: &LayerNormCache<T>, dy: &Tensor<T>, grad: &mut Self) -> Tensor<T> {
        let d = dy.cols();
        let n = T::of(d as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for i in 0..dy.rows() {
            let (g_row, xh) = (dy.row(i), cache.xhat.row(i));
            let mut dxhat = vec![T::zero(); d];
            for j in 0..d {
                grad.gamma.data_mut()[j] += g_row[j] * xh[j];
                grad.beta.data_mut()[j] += g_row[j];
                dxhat[j] = g_row[j] * self.gamma.data()[j];
            }
            let mean_d = dxhat.iter().copied().sum::<T>() / n;
            let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / n;
            let inv = cache.inv_std[i];
            for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                *o = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
        dx
    }
}

/// One post-norm transformer block: self-attention then a ReLU feed-forward
/// network, each wrapped in a residual connection and layer norm.
///
/// The key projection carries no bias: a key bias only shifts every
/// attention score of a query by the same amount, which softmax ignores.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub query: Linear<T>,
    pub key: Tensor<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub norm1: LayerNorm<T>,
    pub ffn_in: Linear<T>,
    pub ffn_out: Linear<T>,
    pub norm2: LayerNorm<T>,
}

tensor_fields!(EncoderLayer {
    query,
    key,
    value,
    output,
    norm1,
    ffn_in,
    ffn_out,
    norm2
});

#[derive(Debug, Clone)]
struct LayerCache<T> {
    x: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    attn: Vec<Tensor<T>>,
    concat: Tensor<T>,
    ln1: LayerNormCache<T>,
    x1: Tensor<T>,
    ffn_pre: Tensor<T>,
    ffn_act: Tensor<T>,
    ln2: LayerNormCache<T>,
}

impl<T: Scalar> EncoderLayer<T> {
    fn new<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        Self {
            query: Linear::new(d, d, rng),
            key: super::uniform_init(d, d, rng),
            value: Linear::new(d, d, rng),
            output: Linear::new(d, d, rng),
            norm1: LayerNorm::new(d),
            ffn_in: Linear::new(d, cfg.ffn_dim, rng),
            ffn_out: Linear::new(cfg.ffn_dim, d, rng),
            norm2: LayerNorm::new(d),
        }
    }

    fn forward(
        &self,
        x: &Tensor<T>,
        heads: usize,
    ) -> Result<(Tensor<T>, LayerCache<T>), ModelError> {
        let d = x.cols();
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let q = self.query.forward(x)?;
        let k = matmul(x, &self.key)?;
        let v = self.value.forward(x)?;
        let mut concat = Tensor::zeros(x.shape());
        let mut attn = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = (
                q.cols_slice(h * dh, dh),
                k.cols_slice(h * dh, dh),
                v.cols_slice(h * dh, dh),
            );
            let mut scores = matmul_nt(&qh, &kh)?;
            scores.scale(scale);
            let a = softmax(&scores, 1)?;
            concat.add_cols_slice(h * dh, &matmul(&a, &vh)?);
            attn.push(a);
        }
        let mut pre1 = self.output.forward(&concat)?;
        pre1.add_assign(x);
        let (x1, ln1) = self.norm1.forward(&pre1);
        let ffn_pre = self.ffn_in.forward(&x1)?;
        let ffn_act = elementwise(&ffn_pre, Activation::Relu);
        let mut pre2 = self.ffn_out.forward(&ffn_act)?;
        pre2.add_assign(&x1);
        let (y, ln2) = self.norm2.forward(&pre2);
        Ok((
            y,
            LayerCache {
                x: x.clone(),
                q,
                k,
                v,
                attn,
                concat,
                ln1,
                x1,
                ffn_pre,
                ffn_act,
                ln2,
            },
        ))
    }

    fn backward(
        &self,
        c: &LayerCache<T>,
        dy: &Tensor<T>,
        grad: &mut Self,
    ) -> Result<Tensor<T>, ModelError> {
        let heads = c.attn.len();
        let d = c.x.cols();
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();

        let dpre2 = self.norm2.backward(&c.ln2, dy, &mut grad.norm2);
        let dact = self
            .ffn_out
            .backward(&c.ffn_act, &dpre2, &mut grad.ffn_out)?;
        let dffn_pre = elementwise_backward(&c.ffn_pre, &c.ffn_act, &dact, Activation::Relu);
        let mut dx1 = self.ffn_in.backward(&c.x1, &dffn_pre, &mut grad.ffn_in)?;
        dx1.add_assign(&dpre2);

        let dpre1 = self.norm1.backward(&c.ln1, &dx1, &mut grad.norm1);
        let dconcat = self.output.backward(&c.concat, &dpre1, &mut grad.output)?;
        let mut dq = Tensor::zeros(c.q.shape());
        let mut dk = Tensor::zeros(c.k.shape());
        let mut dv = Tensor::zeros(c.v.shape());
        for (h, a) in c.attn.iter().enumerate() {
            let (qh, kh, vh) = (
                c.q.cols_slice(h * dh, dh),
                c.k.cols_slice(h * dh, dh),
                c.v.cols_slice(h * dh, dh),
            );
            let doh = dconcat.cols_slice(h * dh, dh);
            let da = matmul_nt(&doh, &vh)?;
            dv.add_cols_slice(h * dh, &matmul_tn(a, &doh)?);
            let mut ds = softmax_backward(a, &da, 1)?;
            ds.scale(scale);
            dq.add_cols_slice(h * dh, &matmul(&ds, &kh)?);
            dk.add_cols_slice(h * dh, &matmul_tn(&ds, &qh)?);
        }
        let mut dx = dpre1;
        dx.add_assign(&self.query.backward(&c.x, &dq, &mut grad.query)?);
        dx.add_assign(&self.value.backward(&c.x, &dv, &mut grad.value)?);
        grad.key.add_assign(&matmul_tn(&c.x, &dk)?);
        dx.add_assign(&matmul_nt(&dk, &self.key)?);
        Ok(dx)
    }
}

/// Token embedding with sinusoidal positions followed by a stack of
/// transformer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub token_embedding: Tensor<T>,
    pub layers: Vec<EncoderLayer<T>>,
}

tensor_fields!(Encoder {
    token_embedding,
    layers
});

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    token_ids: Vec<u32>,
    layers: Vec<LayerCache<T>>,
}

pub(crate) fn positional_encoding(pos: usize, dim: usize, d_model: usize) -> f64 {
    let pair = (dim / 2) as f64;
    let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
    if dim.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        // Embedding rows see a one-hot input, so fan_in = 1.
        let token_embedding = Tensor::new(
            vec![config.vocab_size, config.hidden_dim],
            (0..config.vocab_size * config.hidden_dim)
                .map(|_| T::of(rng.gen_range(-1.0..=1.0)))
                .collect(),
        )?;
        let layers = (0..config.num_layers)
            .map(|_| EncoderLayer::new(config, rng))
            .collect();
        Ok(Self {
            config: config.clone(),
            token_embedding,
            layers,
        })
    }

    /// Per-token contextual states, `T×D`.
    ///
    /// The encoder has no stochastic elements, so `mode` does not change the
    /// result.
    pub fn forward(
        &self,
        token_ids: &[u32],
        _mode: Mode,
    ) -> Result<(Tensor<T>, EncoderCache<T>), ModelError> {
        let cfg = &self.config;
        if token_ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if token_ids.len() > cfg.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: token_ids.len(),
                max: cfg.max_seq_len,
            });
        }
        let d = cfg.hidden_dim;
        let mut x = Tensor::zeros(&[token_ids.len(), d]);
        for (t, &id) in token_ids.iter().enumerate() {
            if id as usize >= cfg.vocab_size {
                return Err(ModelError::UnknownToken {
                    id,
                    vocab_size: cfg.vocab_size,
                });
            }
            let emb = self.token_embedding.row(id as usize);
            for (j, v) in x.row_mut(t).iter_mut().enumerate() {
                *v = emb[j] + T::of(positional_encoding(t, j, d));
            }
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, cfg.num_heads)?;
            caches.push(c);
            x = y;
        }
        Ok((
            x,
            EncoderCache {
                token_ids: token_ids.to_vec(),
                layers: caches,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &EncoderCache<T>,
        dh: &Tensor<T>,
        grad: &mut Self,
    ) -> Result<(), ModelError> {
        let mut d = dh.clone();
        for ((layer, c), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            d = layer.backward(c, &d, g)?;
        }
        for (t, &id) in cache.token_ids.iter().enumerate() {
            for (g, &v) in grad
                .token_embedding
                .row_mut(id as usize)
                .iter_mut()
                .zip(d.row(t))
            {
                *g += v;
            }
        }
        Ok(())
    }
}
