use super::{Linear, ModelError};
use crate::scalar::Scalar;
use crate::tensor::{softmax, Tensor};

/// Number of output classes; index 0 is the negative class, 1 the positive.
pub const CLASS_COUNT: usize = 2;

/// Linear layer from the pooled feature vector to two logits.
pub type Classifier<T> = Linear<T>;

const LOG_EPS: f64 = 1e-12;

/// Class probabilities `softmax(v·W + b)` for a pooled vector `v`.
pub fn classify<T: Scalar>(v: &Tensor<T>, head: &Classifier<T>) -> Result<Tensor<T>, ModelError> {
    if v.len() != head.input_dim() {
        return Err(ModelError::InputDim {
            expected: head.input_dim(),
            got: v.len(),
        });
    }
    let logits = head.forward(&v.clone().reshape(&[1, v.len()])?)?;
    Ok(softmax(&logits.reshape(&[CLASS_COUNT])?, 0)?)
}

/// `−ln p(gold)` with the probability clamped at `1e-12`. NaN passes
/// through so the training loop can abort on it.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, gold: usize) -> T {
    let p = probs.data()[gold];
    let eps = T::of(LOG_EPS);
    -(if p < eps { eps } else { p }).ln()
}

/// Backward pass through softmax and cross-entropy; accumulates head
/// gradients and returns the gradient with respect to `v`.
pub fn classify_backward<T: Scalar>(
    v: &Tensor<T>,
    probs: &Tensor<T>,
    gold: usize,
    head: &Classifier<T>,
    grad: &mut Classifier<T>,
) -> Result<Tensor<T>, ModelError> {
    let mut dlogits = probs.clone();
    if probs.data()[gold] < T::of(LOG_EPS) {
        // Clamped region: the loss is locally constant.
        dlogits.fill(T::zero());
    } else {
        dlogits.data_mut()[gold] -= T::one();
    }
    let x = v.clone().reshape(&[1, v.len()])?;
    let dx = head.backward(&x, &dlogits.reshape(&[1, CLASS_COUNT])?, grad)?;
    Ok(dx.reshape(&[v.len()])?)
}
