use rand::Rng;

use super::{uniform_init, ModelError};
use crate::params::tensor_fields;
use crate::scalar::Scalar;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

/// Affine map `y = x·W + b` applied row-wise; `W` is `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

tensor_fields!(Linear { weight, bias });

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_init(input, output, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut y = matmul(x, &self.weight)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad: &mut Linear<T>,
    ) -> Result<Tensor<T>, ModelError> {
        grad.weight.add_assign(&matmul_tn(x, dy)?);
        grad.bias.add_assign(&dy.sum_rows());
        Ok(matmul_nt(dy, &self.weight)?)
    }
}
