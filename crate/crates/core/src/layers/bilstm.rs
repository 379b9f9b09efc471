use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{uniform_init, Mode, ModelError};
use crate::params::tensor_fields;
use crate::scalar::Scalar;
use crate::tensor::{matmul, matmul_nt, matmul_tn, ops::sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiLstmConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Drop probability between stacked layers, training mode only.
    pub dropout: f64,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 64,
            dropout: 0.25,
        }
    }
}

impl BiLstmConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(ModelError::Config(
                "bilstm.num_layers and bilstm.hidden_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "bilstm.dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// One direction of one LSTM layer. Gate blocks are ordered
/// input, forget, cell candidate, output along the `4H` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    pub w_input: Tensor<T>,
    pub w_hidden: Tensor<T>,
    pub bias: Tensor<T>,
}

tensor_fields!(LstmDirection {
    w_input,
    w_hidden,
    bias
});

#[derive(Debug, Clone)]
struct DirectionCache<T> {
    /// Gate activations per processed step, `T×4H` in processing order.
    gates: Tensor<T>,
    cells: Tensor<T>,
    cell_tanh: Tensor<T>,
    hidden: Tensor<T>,
}

impl<T: Scalar> LstmDirection<T> {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(T::one());
        Self {
            w_input: uniform_init(input, 4 * hidden, rng),
            w_hidden: uniform_init(hidden, 4 * hidden, rng),
            bias,
        }
    }

    fn hidden_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    /// Runs over `x` in the given time order; row `s` of the returned
    /// states corresponds to timestep `order[s]`.
    fn forward(&self, x: &Tensor<T>, reverse: bool) -> Result<DirectionCache<T>, ModelError> {
        let steps = x.rows();
        let h = self.hidden_dim();
        let mut pre = matmul(x, &self.w_input)?;
        pre.add_row_vector(&self.bias);
        let mut gates = Tensor::zeros(&[steps, 4 * h]);
        let mut cells = Tensor::zeros(&[steps, h]);
        let mut cell_tanh = Tensor::zeros(&[steps, h]);
        let mut hidden = Tensor::zeros(&[steps, h]);
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];
        let wh = self.w_hidden.data();
        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            let mut z = pre.row(t).to_vec();
            for (p, &hp) in h_prev.iter().enumerate() {
                if hp == T::zero() {
                    continue;
                }
                for (zj, &w) in z.iter_mut().zip(&wh[p * 4 * h..(p + 1) * 4 * h]) {
                    *zj += hp * w;
                }
            }
            let g = gates.row_mut(s);
            for j in 0..h {
                g[j] = sigmoid(z[j]);
                g[h + j] = sigmoid(z[h + j]);
                g[2 * h + j] = z[2 * h + j].tanh();
                g[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let g = gates.row(s).to_vec();
            for j in 0..h {
                let c = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
                let ct = c.tanh();
                cells.row_mut(s)[j] = c;
                cell_tanh.row_mut(s)[j] = ct;
                hidden.row_mut(s)[j] = g[3 * h + j] * ct;
            }
            h_prev.copy_from_slice(hidden.row(s));
            c_prev.copy_from_slice(cells.row(s));
        }
        Ok(DirectionCache {
            gates,
            cells,
            cell_tanh,
            hidden,
        })
    }

    /// `dh_out` is indexed by processing step. Returns `dx` by timestep.
    fn backward(
        &self,
        x: &Tensor<T>,
        c: &DirectionCache<T>,
        dh_out: &Tensor<T>,
        reverse: bool,
        grad: &mut Self,
    ) -> Result<Tensor<T>, ModelError> {
        let steps = x.rows();
        let h = self.hidden_dim();
        let mut dz_all = Tensor::zeros(&[steps, 4 * h]);
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        for s in (0..steps).rev() {
            let g = c.gates.row(s);
            let ct = c.cell_tanh.row(s);
            let mut dz = vec![T::zero(); 4 * h];
            for j in 0..h {
                let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let dh = dh_out.row(s)[j] + dh_next[j];
                let d_o = dh * ct[j];
                let dc = dh * o_g * (T::one() - ct[j] * ct[j]) + dc_next[j];
                let c_prev = if s > 0 {
                    c.cells.row(s - 1)[j]
                } else {
                    T::zero()
                };
                dz[j] = dc * c_g * i_g * (T::one() - i_g);
                dz[h + j] = dc * c_prev * f_g * (T::one() - f_g);
                dz[2 * h + j] = dc * i_g * (T::one() - c_g * c_g);
                dz[3 * h + j] = d_o * o_g * (T::one() - o_g);
                dc_next[j] = dc * f_g;
            }
            // dh_prev = dz · W_hᵀ; dW_h += h_prevᵀ dz
            let wh = self.w_hidden.data();
            for p in 0..h {
                let wrow = &wh[p * 4 * h..(p + 1) * 4 * h];
                dh_next[p] = wrow.iter().zip(&dz).map(|(&w, &d)| w * d).sum();
            }
            if s > 0 {
                let h_prev = c.hidden.row(s - 1);
                let gw = grad.w_hidden.data_mut();
                for (p, &hp) in h_prev.iter().enumerate() {
                    for (gj, &d) in gw[p * 4 * h..(p + 1) * 4 * h].iter_mut().zip(&dz) {
                        *gj += hp * d;
                    }
                }
            }
            let t = if reverse { steps - 1 - s } else { s };
            dz_all.row_mut(t).copy_from_slice(&dz);
        }
        grad.w_input.add_assign(&matmul_tn(x, &dz_all)?);
        grad.bias.add_assign(&dz_all.sum_rows());
        Ok(matmul_nt(&dz_all, &self.w_input)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer<T> {
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

tensor_fields!(BiLstmLayer { forward, backward });

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Tensor<T>,
    fwd: DirectionCache<T>,
    bwd: DirectionCache<T>,
    /// Inverted-dropout mask applied to this layer's output, if any.
    mask: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// Stacked bidirectional LSTM; each timestep's output is the forward state
/// followed by the backward state, `T×2H`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub config: BiLstmConfig,
    pub layers: Vec<BiLstmLayer<T>>,
}

tensor_fields!(BiLstm { layers });

impl<T: Scalar> BiLstm<T> {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        config: &BiLstmConfig,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { input_dim } else { 2 * h };
                BiLstmLayer {
                    forward: LstmDirection::new(input, h, rng),
                    backward: LstmDirection::new(input, h, rng),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].forward.w_input.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor<T>, BiLstmCache<T>), ModelError> {
        x.expect_rank("bilstm", 2)?;
        if x.rows() == 0 {
            return Err(ModelError::EmptySequence);
        }
        if x.cols() != self.input_dim() {
            return Err(ModelError::InputDim {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let p = self.config.dropout;
        let last = self.layers.len() - 1;
        let mut input = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let fwd = layer.forward.forward(&input, false)?;
            let bwd = layer.backward.forward(&input, true)?;
            let steps = input.rows();
            let mut bwd_by_time = Tensor::zeros(bwd.hidden.shape());
            for s in 0..steps {
                bwd_by_time
                    .row_mut(steps - 1 - s)
                    .copy_from_slice(bwd.hidden.row(s));
            }
            let mut out = fwd.hidden.hcat(&bwd_by_time);
            let mask = if mode == Mode::Train && l < last && p > 0.0 {
                let keep = 1.0 - p;
                let m = Tensor::new(
                    out.shape().to_vec(),
                    (0..out.len())
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                T::of(1.0 / keep)
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                )?;
                out = out.zip_map(&m, |a, b| a * b);
                Some(m)
            } else {
                None
            };
            caches.push(LayerCache {
                input: std::mem::replace(&mut input, out),
                fwd,
                bwd,
                mask,
            });
        }
        Ok((input, BiLstmCache { layers: caches }))
    }

    pub fn backward(
        &self,
        cache: &BiLstmCache<T>,
        dy: &Tensor<T>,
        grad: &mut Self,
    ) -> Result<Tensor<T>, ModelError> {
        let h = self.config.hidden_dim;
        let mut d = dy.clone();
        for ((layer, c), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            if let Some(m) = &c.mask {
                d = d.zip_map(m, |a, b| a * b);
            }
            let steps = d.rows();
            let d_fwd = d.cols_slice(0, h);
            let d_bwd_time = d.cols_slice(h, h);
            let mut d_bwd = Tensor::zeros(d_bwd_time.shape());
            for s in 0..steps {
                d_bwd
                    .row_mut(s)
                    .copy_from_slice(d_bwd_time.row(steps - 1 - s));
            }
            let mut dx = layer
                .forward
                .backward(&c.input, &c.fwd, &d_fwd, false, &mut g.forward)?;
            dx.add_assign(&layer.backward.backward(
                &c.input,
                &c.bwd,
                &d_bwd,
                true,
                &mut g.backward,
            )?);
            d = dx;
        }
        Ok(d)
    }
}
