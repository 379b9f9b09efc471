use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Non-parametric reductions over the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    Max,
    Mean,
}

/// Per-feature max or mean over the rows of `h` (`T×F` → `F`).
///
/// For max pooling the returned indices record the winning row per feature
/// (first occurrence on ties).
pub fn pool<T: Scalar>(h: &Tensor<T>, mode: Reduce) -> Result<(Tensor<T>, Vec<usize>), ModelError> {
    h.expect_rank("pool", 2)?;
    let (steps, f) = (h.rows(), h.cols());
    if steps == 0 {
        return Err(ModelError::EmptySequence);
    }
    match mode {
        Reduce::Mean => {
            let mut out = h.sum_rows();
            out.scale(T::one() / T::of(steps as f64));
            Ok((out, Vec::new()))
        }
        Reduce::Max => {
            let mut out = h.row(0).to_vec();
            let mut arg = vec![0; f];
            for t in 1..steps {
                for (j, &v) in h.row(t).iter().enumerate() {
                    if v > out[j] {
                        out[j] = v;
                        arg[j] = t;
                    }
                }
            }
            Ok((Tensor::vector(out), arg))
        }
    }
}

pub fn pool_backward<T: Scalar>(
    steps: usize,
    argmax: &[usize],
    dy: &Tensor<T>,
    mode: Reduce,
) -> Tensor<T> {
    let f = dy.len();
    let mut dh = Tensor::zeros(&[steps, f]);
    match mode {
        Reduce::Mean => {
            let inv = T::one() / T::of(steps as f64);
            for t in 0..steps {
                for (o, &g) in dh.row_mut(t).iter_mut().zip(dy.data()) {
                    *o = g * inv;
                }
            }
        }
        Reduce::Max => {
            for (j, &t) in argmax.iter().enumerate() {
                dh.set(t, j, dy.data()[j]);
            }
        }
    }
    dh
}
