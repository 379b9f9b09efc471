//! Context-aware sarcasm detection.
//!
//! The crate covers the whole pipeline over JSONL dialogue corpora:
//!
//! * [`tensor`]: dense tensors, analytic backward passes and finite-difference
//!   gradient checks;
//! * [`layers`]: transformer encoder, stacked BiLSTM, NeXtVLAD / max / mean
//!   pooling and the softmax head;
//! * [`dataset`]: record parsing, seeded splits, vocabulary and
//!   context-window expansion;
//! * [`augmentation`]: context-prefix negatives, back-translation positives
//!   and contextual response augmentation over unlabeled threads;
//! * [`training`]: cyclic learning rate with cycled momentum, early stopping,
//!   and context ensembles;
//! * [`eval`]: confusion counts, precision / recall / F1 and reports.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which training and gradient checks use.

pub mod augmentation;
pub mod dataset;
pub mod eval;
pub mod layers;
pub mod params;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use params::Parameters;
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = layers::SarcasmModel<f64>;
pub type Model32 = layers::SarcasmModel<f32>;
pub type ModelParams64 = layers::ModelParams<f64>;
