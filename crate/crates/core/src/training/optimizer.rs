use crate::params::Parameters;
use crate::scalar::Scalar;

/// Gradient descent with classical momentum: `v ← μ·v + g`, `p ← p − η·v`.
#[derive(Debug, Clone)]
pub struct MomentumSgd<M> {
    velocity: M,
}

impl<M> MomentumSgd<M> {
    pub fn new<T: Scalar>(params: &M) -> Self
    where
        M: Parameters<T> + Clone,
    {
        Self {
            velocity: params.zeroed(),
        }
    }

    pub fn velocity(&self) -> &M {
        &self.velocity
    }

    pub fn step<T: Scalar>(&mut self, params: &mut M, grad: &M, lr: T, momentum: T)
    where
        M: Parameters<T>,
    {
        self.velocity.scale_params(momentum);
        self.velocity.axpy_params(T::one(), grad);
        params.axpy_params(-lr, &self.velocity);
    }
}
