use super::{BoostMode, GrowthConfig, GrowthError};
use crate::numerics::{GrowableLayer, Kernel, Patch};

/// Smallest |Σ Ω∘P| accepted by [`normalize_to_unit`].
pub const CONTRAST_EPSILON: f64 = 1e-12;

/// A layer holding only the black-patch detector: every weight −2, bias 1.
pub fn init_seed_layer(
    kernel_size: usize,
    channels: usize,
    alpha: f64,
) -> Result<GrowableLayer, GrowthError> {
    let mut layer = GrowableLayer::new(kernel_size, channels, alpha)?;
    layer.push(Kernel::new(vec![-2.0; layer.patch_len()], 1.0))?;
    Ok(layer)
}

/// Ω = P − mean(P).
pub fn center_patch(patch: &Patch) -> Patch {
    let mean = patch.mean();
    patch.with_values(patch.values().iter().map(|v| v - mean).collect())
}

/// C = Ω / Σ(Ω∘P), so that ⟨C, P⟩ = 1.
pub fn normalize_to_unit(omega: &Patch, patch: &Patch) -> Result<Patch, GrowthError> {
    if !omega.same_shape(patch) {
        return Err(GrowthError::ShapeMismatch {
            expected: patch.values().len(),
            actual: omega.values().len(),
        });
    }
    let denom: f64 = omega.values().iter().zip(patch.values()).map(|(o, p)| o * p).sum();
    if !(denom.abs() > CONTRAST_EPSILON) {
        return Err(GrowthError::NoContrast);
    }
    Ok(omega.with_values(omega.values().iter().map(|o| o / denom).collect()))
}

/// One sign-preserving contrast step: x → sign(x)·x².
pub fn boost_contrast(omega: &Patch) -> Patch {
    omega.with_values(omega.values().iter().map(|x| x * x.abs()).collect())
}

/// One literal contrast step: Ω⁺∘Ω⁺ + Ω⁻∘Ω⁻, i.e. every entry squared.
pub fn boost_contrast_literal(omega: &Patch) -> Patch {
    omega.with_values(omega.values().iter().map(|x| x * x).collect())
}

impl BoostMode {
    pub fn apply(self, omega: &Patch) -> Patch {
        match self {
            BoostMode::Literal => boost_contrast_literal(omega),
            BoostMode::SignPreserving => boost_contrast(omega),
        }
    }
}

/// A freshly initialized kernel plus how it got there.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInit {
    pub kernel: Kernel,
    /// max|C| straight after unit-response scaling, before any boosting.
    pub pre_boost_max_weight: f64,
    pub boost_iters: usize,
    /// Boosting ran but max|C| is still above the trigger.
    pub boost_exhausted: bool,
}

/// Builds a kernel that answers exactly σ(1) on `patch`.
///
/// When unit-response scaling yields weights above `boost_trigger`, the
/// centred patch is reshaped with the configured boost step and re-scaled, up
/// to `boost_max_iters` times. A step is kept only if it does not increase
/// max|C|; the first step that would is discarded and boosting stops there.
pub fn init_kernel_from_patch(patch: &Patch, config: &GrowthConfig) -> Result<KernelInit, GrowthError> {
    let mut omega = center_patch(patch);
    let mut weights = normalize_to_unit(&omega, patch)?;
    let pre_boost = max_abs(&weights);
    let mut current = pre_boost;
    let mut iters = 0;
    while current > config.boost_trigger && iters < config.boost_max_iters {
        let mut candidate = config.boost_mode.apply(&omega);
        if config.boost_recenter {
            candidate = center_patch(&candidate);
        }
        let Ok(scaled) = normalize_to_unit(&candidate, patch) else {
            break;
        };
        let m = max_abs(&scaled);
        if m > current {
            break;
        }
        omega = candidate;
        weights = scaled;
        current = m;
        iters += 1;
    }
    Ok(KernelInit {
        kernel: Kernel::new(weights.into_values(), 0.0),
        pre_boost_max_weight: pre_boost,
        boost_iters: iters,
        boost_exhausted: current > config.boost_trigger,
    })
}

fn max_abs(p: &Patch) -> f64 {
    p.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sigmoid;

    fn p2(values: [f64; 4]) -> Patch {
        Patch::new(2, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn seed_layer_construction() {
        let layer = init_seed_layer(4, 1, sigmoid(0.5)).unwrap();
        assert_eq!(layer.len(), 1);
        let k = &layer.kernels()[0];
        assert!(k.weights.iter().all(|&w| w == -2.0));
        assert_eq!(k.bias, 1.0);
        let half = Patch::filled(4, 1, 0.5);
        assert!((k.response(&half).unwrap() - sigmoid(-15.0)).abs() < 1e-20);
        assert!((sigmoid(-15.0) - 3.059022269256247e-7).abs() < 1e-18);
    }

    #[test]
    fn centering() {
        assert!(center_patch(&Patch::filled(2, 1, 0.3)).values().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(center_patch(&p2([0.0, 1.0, 0.0, 1.0])).values(), &[-0.5, 0.5, -0.5, 0.5]);
        let zm = p2([-0.25, 0.25, 0.5, -0.5]);
        assert_eq!(center_patch(&zm), zm);
    }

    #[test]
    fn unit_normalization() {
        let p = p2([0.0, 1.0, 0.0, 1.0]);
        let omega = center_patch(&p);
        let c = normalize_to_unit(&omega, &p).unwrap();
        assert_eq!(c, omega);
        let flat = Patch::filled(2, 1, 0.7);
        assert!(matches!(
            normalize_to_unit(&center_patch(&flat), &flat),
            Err(GrowthError::NoContrast)
        ));
    }

    #[test]
    fn boost_steps() {
        let om = p2([-0.5, 0.5, 0.5, -0.5]);
        assert_eq!(boost_contrast(&om).values(), &[-0.25, 0.25, 0.25, -0.25]);
        assert_eq!(boost_contrast_literal(&om).values(), &[0.25; 4]);
        assert_eq!(boost_contrast(&p2([0.0; 4])).values(), &[0.0; 4]);
    }

    #[test]
    fn init_kernel_hits_unit_response_with_zero_bias() {
        let p = Patch::new(2, 1, vec![0.1, 0.9, 0.4, 0.6]).unwrap();
        let init = init_kernel_from_patch(&p, &GrowthConfig::default()).unwrap();
        assert_eq!(init.kernel.bias, 0.0);
        assert!((init.kernel.preactivation(&p).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(init.boost_iters, 0);
    }

    #[test]
    fn low_contrast_patch_triggers_boost() {
        let values: Vec<f64> = (0..16).map(|i| 0.5 + if i % 2 == 0 { 1e-3 } else { -1e-3 } * (1.0 + i as f64 / 16.0)).collect();
        let p = Patch::new(4, 1, values).unwrap();
        assert!(p.std_dev() <= 1.5e-3);
        let init = init_kernel_from_patch(&p, &GrowthConfig::default()).unwrap();
        assert!(init.pre_boost_max_weight > 10.0);
        assert!(init.boost_iters >= 1);
        assert!(init.kernel.max_abs_weight() <= init.pre_boost_max_weight);
        assert!((init.kernel.preactivation(&p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_patch_has_no_contrast() {
        assert!(matches!(
            init_kernel_from_patch(&Patch::filled(4, 3, 0.2), &GrowthConfig::default()),
            Err(GrowthError::NoContrast)
        ));
    }
}
