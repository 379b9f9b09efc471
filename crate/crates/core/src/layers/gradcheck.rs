//! Finite-difference checks of every layer's backward pass.
//!
//! Each check draws a random layer and input, reduces the output to a
//! scalar with a fixed random projection, and compares the analytic
//! gradient of that scalar against central differences. Gradients with
//! respect to the layer input are checked alongside the parameters under
//! the name `input`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    classify, classify_backward, cross_entropy, BiLstm, BiLstmConfig, Classifier, Encoder,
    EncoderConfig, Linear, Mode, ModelConfig, ModelError, ModelInput, NextVlad, NextVladConfig,
    SarcasmModel, CLASS_COUNT,
};
use crate::params::{join, Parameters};
use crate::tensor::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    pub reports: Vec<GradCheckReport>,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.reports
            .iter()
            .map(|r| r.max_relative_error)
            .fold(0.0, f64::max)
    }
}

/// A layer together with the input it is checked on.
#[derive(Clone)]
struct Probe<L> {
    layer: L,
    input: Tensor<f64>,
}

impl<L: Parameters<f64>> Parameters<f64> for Probe<L> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<f64>)) {
        self.layer.visit(prefix, f);
        f(join(prefix, "input"), &self.input);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<f64>)) {
        self.layer.visit_mut(prefix, f);
        f(join(prefix, "input"), &mut self.input);
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("consistent shape")
}

fn layer_check(layer: &str, reports: Vec<GradCheckReport>) -> LayerCheck {
    LayerCheck {
        layer: layer.to_string(),
        reports,
    }
}

pub fn check_encoder(
    config: &EncoderConfig,
    seq_len: usize,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<LayerCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = Encoder::<f64>::new(config, &mut rng)?;
    let ids: Vec<u32> = (0..seq_len)
        .map(|_| rng.gen_range(0..config.vocab_size as u32))
        .collect();
    let proj = random_tensor(&[seq_len, config.hidden_dim], &mut rng);
    let (_, cache) = enc.forward(&ids, Mode::Eval)?;
    let mut grad = enc.zeroed();
    enc.backward(&cache, &proj, &mut grad)?;
    let reports = grad_check(
        &mut enc,
        &grad,
        |e| {
            e.forward(&ids, Mode::Eval)
                .expect("valid input")
                .0
                .dot(&proj)
        },
        gc,
    )?;
    Ok(layer_check("encoder", reports))
}

pub fn check_bilstm(
    input_dim: usize,
    config: &BiLstmConfig,
    seq_len: usize,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<LayerCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = BiLstm::<f64>::new(input_dim, config, &mut rng)?;
    let input = random_tensor(&[seq_len, input_dim], &mut rng);
    let proj = random_tensor(&[seq_len, config.output_dim()], &mut rng);
    let (_, cache) = layer.forward(&input, Mode::Eval, &mut rng)?;
    let mut grad = Probe {
        layer: layer.zeroed(),
        input: Tensor::zeros(input.shape()),
    };
    grad.input = layer.backward(&cache, &proj, &mut grad.layer)?;
    let mut probe = Probe { layer, input };
    let reports = grad_check(
        &mut probe,
        &grad,
        |p| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            p.layer
                .forward(&p.input, Mode::Eval, &mut r)
                .expect("valid input")
                .0
                .dot(&proj)
        },
        gc,
    )?;
    Ok(layer_check("bilstm", reports))
}

pub fn check_nextvlad(
    config: &NextVladConfig,
    seq_len: usize,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<LayerCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = NextVlad::<f64>::new(config, &mut rng)?;
    let input = random_tensor(&[seq_len, config.input_dim], &mut rng);
    let proj = random_tensor(&[config.output_dim], &mut rng);
    let (_, cache) = layer.forward(&input)?;
    let mut grad = Probe {
        layer: layer.zeroed(),
        input: Tensor::zeros(input.shape()),
    };
    grad.input = layer.backward(&cache, &proj, &mut grad.layer)?;
    let mut probe = Probe { layer, input };
    let reports = grad_check(
        &mut probe,
        &grad,
        |p| p.layer.forward(&p.input).expect("valid input").0.dot(&proj),
        gc,
    )?;
    Ok(layer_check("nextvlad", reports))
}

/// Checks the classifier head through softmax and cross-entropy.
pub fn check_head(
    input_dim: usize,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<LayerCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head: Classifier<f64> = Linear::new(input_dim, CLASS_COUNT, &mut rng);
    let input = random_tensor(&[input_dim], &mut rng);
    let gold = rng.gen_range(0..CLASS_COUNT);
    let probs = classify(&input, &head)?;
    let mut grad = Probe {
        layer: head.zeroed(),
        input: Tensor::zeros(input.shape()),
    };
    grad.input = classify_backward(&input, &probs, gold, &head, &mut grad.layer)?;
    let mut probe = Probe { layer: head, input };
    let reports = grad_check(
        &mut probe,
        &grad,
        |p| cross_entropy(&classify(&p.input, &p.layer).expect("valid input"), gold),
        gc,
    )?;
    Ok(layer_check("head", reports))
}

/// End-to-end check of the full stack on random token ids, in eval mode.
pub fn check_model(
    config: &ModelConfig,
    seq_len: usize,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<LayerCheck, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SarcasmModel::<f64>::new(config, &mut rng)?;
    let ids: Vec<u32> = (0..seq_len)
        .map(|_| rng.gen_range(0..config.encoder.vocab_size as u32))
        .collect();
    let input = ModelInput::Tokens(ids);
    let gold = rng.gen_range(0..CLASS_COUNT);
    let pass = model.forward(&input, Mode::Eval, &mut rng)?;
    let mut grad = model.zeroed();
    model.backward(&pass, gold, &mut grad, true)?;
    let reports = grad_check(
        &mut model,
        &grad,
        |m| m.loss(&input, gold).expect("valid input"),
        gc,
    )?;
    Ok(layer_check("model", reports))
}

/// Sizes used by [`standard_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSizes {
    pub encoder: EncoderConfig,
    pub encoder_seq_len: usize,
    pub bilstm_input_dim: usize,
    pub bilstm: BiLstmConfig,
    pub bilstm_seq_len: usize,
    pub nextvlad: NextVladConfig,
    pub nextvlad_seq_len: usize,
    pub head_input_dim: usize,
}

impl Default for SuiteSizes {
    /// Small layers: a 1-layer D=8 encoder on 3 tokens, a 2-layer H=6
    /// BiLSTM on a 4×8 input, NeXtVLAD with N=16, λ=2, G=4, K=8 on 6
    /// steps, and a head over 16 features.
    fn default() -> Self {
        Self {
            encoder: EncoderConfig {
                num_layers: 1,
                hidden_dim: 8,
                num_heads: 2,
                ffn_dim: 16,
                max_seq_len: 16,
                vocab_size: 12,
            },
            encoder_seq_len: 3,
            bilstm_input_dim: 8,
            bilstm: BiLstmConfig {
                num_layers: 2,
                hidden_dim: 6,
                dropout: 0.0,
            },
            bilstm_seq_len: 4,
            nextvlad: NextVladConfig {
                input_dim: 16,
                expansion: 2,
                groups: 4,
                clusters: 8,
                output_dim: 12,
            },
            nextvlad_seq_len: 6,
            head_input_dim: 16,
        }
    }
}

impl SuiteSizes {
    /// Layer sizes taken from a model configuration, with short sequences.
    pub fn from_model(config: &ModelConfig) -> Self {
        Self {
            encoder: config.encoder.clone(),
            encoder_seq_len: 4.min(config.encoder.max_seq_len),
            bilstm_input_dim: config.encoder.hidden_dim,
            bilstm: config.bilstm.clone(),
            bilstm_seq_len: 4,
            nextvlad: config.nextvlad(),
            nextvlad_seq_len: 6,
            head_input_dim: config.pooled_dim(),
        }
    }
}

/// Runs encoder, BiLSTM, NeXtVLAD and head checks.
pub fn standard_suite(
    sizes: &SuiteSizes,
    seed: u64,
    gc: GradCheckConfig,
) -> Result<Vec<LayerCheck>, ModelError> {
    Ok(vec![
        check_encoder(&sizes.encoder, sizes.encoder_seq_len, seed, gc)?,
        check_bilstm(
            sizes.bilstm_input_dim,
            &sizes.bilstm,
            sizes.bilstm_seq_len,
            seed + 1,
            gc,
        )?,
        check_nextvlad(&sizes.nextvlad, sizes.nextvlad_seq_len, seed + 2, gc)?,
        check_head(sizes.head_input_dim, seed + 3, gc)?,
    ])
}
