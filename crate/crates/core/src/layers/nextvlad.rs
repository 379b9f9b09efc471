use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, Linear, ModelError};
use crate::params::tensor_fields;
use crate::scalar::Scalar;
use crate::tensor::{
    l2_normalize, l2_normalize_backward, matmul, matmul_nt, matmul_tn, ops::sigmoid, softmax,
    softmax_backward, Tensor,
};

const INTRA_NORM_EPS: f64 = 1e-12;
const CENTER_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextVladConfig {
    pub input_dim: usize,
    pub expansion: usize,
    pub groups: usize,
    pub clusters: usize,
    pub output_dim: usize,
}

impl NextVladConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("input_dim", self.input_dim),
            ("expansion", self.expansion),
            ("groups", self.groups),
            ("clusters", self.clusters),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::Config(format!(
                    "nextvlad.{name} must be positive"
                )));
            }
        }
        if !self.expanded_dim().is_multiple_of(self.groups) {
            return Err(ModelError::Config(format!(
                "nextvlad groups {} do not divide expanded dimension {}",
                self.groups,
                self.expanded_dim()
            )));
        }
        Ok(())
    }

    pub fn expanded_dim(&self) -> usize {
        self.expansion * self.input_dim
    }

    pub fn group_dim(&self) -> usize {
        self.expanded_dim() / self.groups
    }

    /// Length of the flattened, intra-normalized VLAD descriptor.
    pub fn descriptor_len(&self) -> usize {
        self.clusters * self.group_dim()
    }
}

/// NeXtVLAD pooling: feature expansion, group split with sigmoid group
/// attention, soft cluster assignment, residual aggregation against learned
/// centers, per-cluster L2 normalization, and a final linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct NextVlad<T> {
    pub config: NextVladConfig,
    pub expand: Linear<T>,
    pub attention: Linear<T>,
    /// Cluster logits for every (group, cluster) pair, laid out group-major.
    pub assign: Linear<T>,
    pub centers: Tensor<T>,
    pub project: Linear<T>,
}

tensor_fields!(NextVlad {
    expand,
    attention,
    assign,
    centers,
    project
});

#[derive(Debug, Clone)]
pub struct NextVladCache<T> {
    x: Tensor<T>,
    expanded: Tensor<T>,
    /// Group attention, `T×G`.
    attention: Tensor<T>,
    /// Cluster assignment, `T×G×K`.
    assignment: Tensor<T>,
    /// Per-(t, g) weights `a·α`, `(T·G)×K`.
    weights: Tensor<T>,
    vlad: Tensor<T>,
    flat: Tensor<T>,
}

impl<T: Scalar> NextVladCache<T> {
    pub fn assignment(&self) -> &Tensor<T> {
        &self.assignment
    }

    /// Aggregated residuals before intra-normalization, `K×(λN/G)`.
    pub fn unnormalized(&self) -> &Tensor<T> {
        &self.vlad
    }

    /// Flattened intra-normalized descriptor before projection.
    pub fn descriptor(&self) -> &Tensor<T> {
        &self.flat
    }
}

impl<T: Scalar> NextVlad<T> {
    pub fn new<R: Rng + ?Sized>(config: &NextVladConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let e = config.expanded_dim();
        Ok(Self {
            config: config.clone(),
            expand: Linear::new(config.input_dim, e, rng),
            attention: Linear::new(e, config.groups, rng),
            assign: Linear::new(e, config.groups * config.clusters, rng),
            centers: {
                let mut c: Tensor<T> = uniform_init(config.clusters, config.group_dim(), rng);
                c.scale(T::of(CENTER_INIT_SCALE));
                c
            },
            project: Linear::new(config.descriptor_len(), config.output_dim, rng),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, NextVladCache<T>), ModelError> {
        let cfg = &self.config;
        x.expect_rank("nextvlad", 2)?;
        if x.rows() == 0 {
            return Err(ModelError::EmptySequence);
        }
        if x.cols() != cfg.input_dim {
            return Err(ModelError::InputDim {
                expected: cfg.input_dim,
                got: x.cols(),
            });
        }
        let (steps, g, k, gd) = (x.rows(), cfg.groups, cfg.clusters, cfg.group_dim());
        let expanded = self.expand.forward(x)?;
        let attention = self.attention.forward(&expanded)?.map(sigmoid);
        let logits = self.assign.forward(&expanded)?.reshape(&[steps, g, k])?;
        let assignment = softmax(&logits, 2)?;

        let mut weights = Tensor::zeros(&[steps * g, k]);
        for t in 0..steps {
            for gi in 0..g {
                let a = attention.at(t, gi);
                let row = (t * g + gi) * k;
                for ki in 0..k {
                    weights.data_mut()[row + ki] = a * assignment.data()[row + ki];
                }
            }
        }
        // v_k = Σ w x̃ − (Σ w) c_k
        let grouped = expanded.clone().reshape(&[steps * g, gd])?;
        let mut vlad = matmul_tn(&weights, &grouped)?;
        let mass = weights.sum_rows();
        for ki in 0..k {
            let m = mass.data()[ki];
            for (v, &c) in vlad.row_mut(ki).iter_mut().zip(self.centers.row(ki)) {
                *v -= m * c;
            }
        }
        let normalized = l2_normalize(&vlad, 1, T::of(INTRA_NORM_EPS))?;
        let flat = normalized.reshape(&[1, k * gd])?;
        let out = self.project.forward(&flat)?;
        let out = out.reshape(&[cfg.output_dim])?;
        Ok((
            out,
            NextVladCache {
                x: x.clone(),
                expanded,
                attention,
                assignment,
                weights,
                vlad,
                flat,
            },
        ))
    }

    pub fn backward(
        &self,
        c: &NextVladCache<T>,
        dy: &Tensor<T>,
        grad: &mut Self,
    ) -> Result<Tensor<T>, ModelError> {
        let cfg = &self.config;
        let (steps, g, k, gd) = (c.x.rows(), cfg.groups, cfg.clusters, cfg.group_dim());
        let dy = dy.clone().reshape(&[1, cfg.output_dim])?;
        let dflat = self.project.backward(&c.flat, &dy, &mut grad.project)?;
        let dnorm = dflat.reshape(&[k, gd])?;
        let dvlad = l2_normalize_backward(&c.vlad, &dnorm, 1, T::of(INTRA_NORM_EPS))?;

        let mass = c.weights.sum_rows();
        for ki in 0..k {
            let m = mass.data()[ki];
            for (gc, &dv) in grad.centers.row_mut(ki).iter_mut().zip(dvlad.row(ki)) {
                *gc -= m * dv;
            }
        }
        let grouped = c.expanded.clone().reshape(&[steps * g, gd])?;
        let dgrouped = matmul(&c.weights, &dvlad)?;
        // dw[tg, k] = (x̃_tg − c_k)·dv_k
        let mut dweights = matmul_nt(&grouped, &dvlad)?;
        let center_dot: Vec<T> = (0..k)
            .map(|ki| {
                self.centers
                    .row(ki)
                    .iter()
                    .zip(dvlad.row(ki))
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect();
        for row in 0..steps * g {
            for (v, &cd) in dweights.row_mut(row).iter_mut().zip(&center_dot) {
                *v -= cd;
            }
        }

        let mut dattn_logits = Tensor::zeros(&[steps, g]);
        let mut dassign = Tensor::zeros(&[steps, g, k]);
        for t in 0..steps {
            for gi in 0..g {
                let a = c.attention.at(t, gi);
                let row = (t * g + gi) * k;
                let mut da = T::zero();
                for ki in 0..k {
                    let dw = dweights.data()[row + ki];
                    da += dw * c.assignment.data()[row + ki];
                    dassign.data_mut()[row + ki] = dw * a;
                }
                dattn_logits.set(t, gi, da * a * (T::one() - a));
            }
        }
        let dassign_logits =
            softmax_backward(&c.assignment, &dassign, 2)?.reshape(&[steps, g * k])?;

        let mut dexpanded = dgrouped.reshape(&[steps, cfg.expanded_dim()])?;
        dexpanded.add_assign(&self.attention.backward(
            &c.expanded,
            &dattn_logits,
            &mut grad.attention,
        )?);
        dexpanded.add_assign(&self.assign.backward(
            &c.expanded,
            &dassign_logits,
            &mut grad.assign,
        )?);
        self.expand.backward(&c.x, &dexpanded, &mut grad.expand)
    }
}
