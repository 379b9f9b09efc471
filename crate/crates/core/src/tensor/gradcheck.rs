//! Central finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use super::TensorError;
use crate::params::Parameters;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Checks at most this many evenly spaced entries per tensor; `None`
    /// checks every entry.
    pub max_entries: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_entries: None,
        }
    }
}

fn checked_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|j| j * len / m).collect(),
        _ => (0..len).collect(),
    }
}

/// Outcome for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub param_name: String,
    pub max_relative_error: f64,
    pub epsilon: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` (a gradient laid out like `params`) with central
/// differences of `loss`, one report per parameter tensor.
///
/// `params` is perturbed in place and restored bit-for-bit afterwards.
pub fn grad_check<T, M>(
    params: &mut M,
    analytic: &M,
    mut loss: impl FnMut(&M) -> T,
    cfg: GradCheckConfig,
) -> Result<Vec<GradCheckReport>, TensorError>
where
    T: Scalar,
    M: Parameters<T>,
{
    if !(1e-7..=1e-4).contains(&cfg.epsilon) {
        return Err(TensorError::InvalidArgument(format!(
            "grad_check epsilon {} outside [1e-7, 1e-4]",
            cfg.epsilon
        )));
    }
    let base = loss(params).as_f64();
    if !base.is_finite() {
        return Err(TensorError::NonFiniteLoss {
            param: "<unperturbed>".into(),
            index: 0,
            value: base,
        });
    }
    let grads: Vec<(String, Vec<f64>)> = analytic
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.data().iter().map(|v| v.as_f64()).collect()))
        .collect();
    let eps = T::of(cfg.epsilon);
    let mut reports = Vec::with_capacity(grads.len());
    for (name, grad) in grads {
        let mut worst = 0.0f64;
        for i in checked_indices(grad.len(), cfg.max_entries) {
            let a = grad[i];
            let mut original = T::zero();
            let found = params.with_param_mut(&name, &mut |t| {
                original = t.data()[i];
                t.data_mut()[i] = original + eps;
            });
            if !found {
                return Err(TensorError::InvalidArgument(format!(
                    "gradient names unknown parameter {name}"
                )));
            }
            let plus = loss(params).as_f64();
            params.with_param_mut(&name, &mut |t| t.data_mut()[i] = original - eps);
            let minus = loss(params).as_f64();
            params.with_param_mut(&name, &mut |t| t.data_mut()[i] = original);
            for value in [plus, minus] {
                if !value.is_finite() {
                    return Err(TensorError::NonFiniteLoss {
                        param: name.clone(),
                        index: i,
                        value,
                    });
                }
            }
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            worst = worst.max(relative_error(a, numeric));
        }
        reports.push(GradCheckReport {
            passed: worst <= cfg.tolerance,
            param_name: name,
            max_relative_error: worst,
            epsilon: cfg.epsilon,
        });
    }
    Ok(reports)
}
