use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePolicy {
    #[default]
    Triangular,
}

/// Triangular cyclic learning rate with momentum cycled in antiphase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CyclicLRConfig {
    pub base_lr: f64,
    pub max_lr: f64,
    /// Half-cycle length in iterations; `None` means two epochs' worth,
    /// filled in by [`CyclicLRConfig::resolve`].
    pub step_size: Option<usize>,
    pub momentum_high: f64,
    pub momentum_low: f64,
    pub policy: CyclePolicy,
}

impl Default for CyclicLRConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-6,
            max_lr: 2e-5,
            step_size: None,
            momentum_high: 0.825,
            momentum_low: 0.725,
            policy: CyclePolicy::Triangular,
        }
    }
}

impl CyclicLRConfig {
    /// `base_lr == max_lr` is allowed and gives a constant rate.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.base_lr >= 0.0 && self.base_lr <= self.max_lr && self.max_lr.is_finite()) {
            return bad(format!(
                "lr.base_lr {} must be non-negative and not above lr.max_lr {}",
                self.base_lr, self.max_lr
            ));
        }
        if !(self.momentum_low >= 0.0
            && self.momentum_low <= self.momentum_high
            && self.momentum_high < 1.0)
        {
            return bad(format!(
                "lr.momentum_low {} must not exceed lr.momentum_high {} (both in [0, 1))",
                self.momentum_low, self.momentum_high
            ));
        }
        if self.step_size == Some(0) {
            return bad("lr.step_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn resolve(&self, iterations_per_epoch: usize) -> Self {
        Self {
            step_size: Some(self.step_size.unwrap_or(2 * iterations_per_epoch.max(1))),
            ..self.clone()
        }
    }
}

/// `(lr, momentum)` at `iteration`:
///
/// ```text
/// cycle = floor(1 + it / (2·step))
/// x     = |it/step − 2·cycle + 1|
/// lr    = base + (max − base)·max(0, 1 − x)
/// ```
///
/// Momentum is `momentum_high` at `base` and `momentum_low` at `max`.
///
/// # Panics
/// Panics if `cfg.step_size` has not been resolved.
pub fn cyclic_lr(iteration: usize, cfg: &CyclicLRConfig) -> (f64, f64) {
    let step = cfg.step_size.expect("step_size resolved") as f64;
    let it = iteration as f64;
    let cycle = (1.0 + it / (2.0 * step)).floor();
    let x = (it / step - 2.0 * cycle + 1.0).abs();
    let phase = (1.0 - x).max(0.0);
    let lr = cfg.base_lr + (cfg.max_lr - cfg.base_lr) * phase;
    let momentum = cfg.momentum_high - (cfg.momentum_high - cfg.momentum_low) * phase;
    (lr, momentum)
}
