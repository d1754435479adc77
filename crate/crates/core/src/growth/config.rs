use serde::{Deserialize, Serialize};

use super::GrowthError;
use crate::numerics::sigmoid;

/// How a low-contrast centred patch is reshaped before re-normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoostMode {
    /// Ω′ = Ω⁺∘Ω⁺ + Ω⁻∘Ω⁻ (every entry squared, signs dropped).
    #[default]
    Literal,
    /// x → sign(x)·x², keeping the sign pattern of Ω.
    SignPreserving,
}

/// Knobs of the growth driver. Defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    /// Activation threshold α; a kernel accepts a patch when σ(z) > α.
    pub alpha: f64,
    /// Growth stops once the running mean inactive ratio drops below this.
    pub stop_ratio: f64,
    /// Target response λ for the source patch; `None` means λ = α. The
    /// default σ(1) is the response a freshly initialized kernel already gives
    /// its source patch, so the fit only adds rejection of the negatives.
    pub lambda_target: Option<f64>,
    /// Cap on the total number of kernels, seed kernel included.
    pub max_kernels: usize,
    pub negatives_per_kernel: usize,
    /// Contrast boosting runs while max|weight| exceeds this.
    pub boost_trigger: f64,
    pub boost_max_iters: usize,
    pub boost_mode: BoostMode,
    /// Re-centre Ω after each boost step.
    pub boost_recenter: bool,
    pub train_steps: usize,
    pub train_lr: f64,
    pub epochs: usize,
    /// Number of most recent images in the running mean of H.
    pub stop_batch: usize,
    pub rng_seed: u64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            alpha: sigmoid(0.5),
            stop_ratio: 0.1,
            lambda_target: Some(sigmoid(1.0)),
            max_kernels: 500,
            negatives_per_kernel: 16,
            boost_trigger: 10.0,
            boost_max_iters: 5,
            boost_mode: BoostMode::Literal,
            boost_recenter: false,
            train_steps: 200,
            train_lr: 0.1,
            epochs: 10,
            stop_batch: 32,
            rng_seed: 0,
        }
    }
}

impl GrowthConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda_target.unwrap_or(self.alpha)
    }

    pub fn validate(&self) -> Result<(), GrowthError> {
        let bad = |msg: String| Err(GrowthError::Config(msg));
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0.5, 1), got {}", self.alpha));
        }
        if !(self.stop_ratio > 0.0 && self.stop_ratio < 1.0) {
            return bad(format!("stop_ratio must lie in (0, 1), got {}", self.stop_ratio));
        }
        let lambda = self.lambda();
        if !(lambda >= self.alpha && lambda <= 1.0) {
            return bad(format!("lambda_target must lie in [alpha, 1], got {lambda}"));
        }
        if self.max_kernels == 0 {
            return bad("max_kernels must be at least 1".into());
        }
        if !(self.boost_trigger > 0.0) {
            return bad(format!("boost_trigger must be positive, got {}", self.boost_trigger));
        }
        if !(self.train_lr > 0.0 && self.train_lr.is_finite()) {
            return bad(format!("train_lr must be positive, got {}", self.train_lr));
        }
        if self.stop_batch == 0 {
            return bad("stop_batch must be at least 1".into());
        }
        Ok(())
    }
}
