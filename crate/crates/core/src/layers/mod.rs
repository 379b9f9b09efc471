//! The classifier stack: token encoder, BiLSTM, pooling, and softmax head.
//!
//! Each layer exposes `forward`, returning its output plus a cache, and a
//! `backward` that accumulates parameter gradients into a structure of the
//! same type and returns the gradient with respect to the layer input.

mod bilstm;
pub mod checkpoint;
pub mod embedding_file;
mod encoder;
pub mod gradcheck;
mod head;
mod linear;
mod model;
mod nextvlad;
mod pool;

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

pub use bilstm::{BiLstm, BiLstmCache, BiLstmConfig, BiLstmLayer, LstmDirection};
pub use encoder::{Encoder, EncoderCache, EncoderConfig, EncoderLayer, LayerNorm};
pub use head::{classify, classify_backward, cross_entropy, Classifier, CLASS_COUNT};
pub use linear::Linear;
pub use model::{
    ForwardPass, ModelConfig, ModelInput, ModelParams, PoolingConfig, PoolingMode, SarcasmModel,
};
pub use nextvlad::{NextVlad, NextVladCache, NextVladConfig};
pub use pool::{pool, pool_backward, Reduce};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    UnknownToken { id: u32, vocab_size: usize },
    #[error("input feature dimension {got}, expected {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("parameter {0}")]
    Params(String),
}

/// Whether stochastic elements (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `rows×cols` matrix drawn from uniform(−1/√fan_in, 1/√fan_in) with
/// `fan_in = rows`.
pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}
