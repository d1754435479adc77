use serde::{Deserialize, Serialize};

use super::GrowthError;
use crate::numerics::{check_conv_input, dot, sigmoid, GrowableLayer, Kernel, Patch, Tensor3};

/// Per-position summary of how a layer responds to an image, over the valid
/// convolution grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    pub height: usize,
    pub width: usize,
    pub alpha: f64,
    pub max_response: Vec<f64>,
    pub argmax_kernel: Vec<usize>,
    pub active: Vec<bool>,
}

impl ActivationMap {
    pub fn len(&self) -> usize {
        self.max_response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max_response.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    #[inline]
    pub fn position(&self, flat: usize) -> (usize, usize) {
        (flat / self.width, flat % self.width)
    }
}

/// σ(Σ W∘P + b).
pub fn kernel_response(kernel: &Kernel, patch: &Patch) -> Result<f64, GrowthError> {
    Ok(kernel.response(patch)?)
}

/// Max kernel response at every valid position; a position is active when
/// that maximum is strictly greater than α. Ties in the argmax go to the
/// earliest kernel.
pub fn activation_map(layer: &GrowableLayer, image: &Tensor3) -> Result<ActivationMap, GrowthError> {
    if layer.is_empty() {
        return Err(GrowthError::EmptyLayer);
    }
    let k = layer.kernel_size();
    check_conv_input(image, k, layer.in_channels())?;
    let (h, w) = (image.height() - k + 1, image.width() - k + 1);
    let alpha = layer.alpha();
    let mut max_response = Vec::with_capacity(h * w);
    let mut argmax_kernel = Vec::with_capacity(h * w);
    let mut active = Vec::with_capacity(h * w);
    let mut patch = vec![0.0; layer.patch_len()];
    for r in 0..h {
        for c in 0..w {
            image.extract_patch_into(r, c, k, &mut patch);
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0;
            for (i, kernel) in layer.kernels().iter().enumerate() {
                let z = dot(&kernel.weights, &patch) + kernel.bias;
                if z > best {
                    best = z;
                    best_k = i;
                }
            }
            // σ is monotone, so the argmax over pre-activations is the argmax over responses.
            let response = sigmoid(best);
            max_response.push(response);
            argmax_kernel.push(best_k);
            active.push(response > alpha);
        }
    }
    Ok(ActivationMap {
        height: h,
        width: w,
        alpha,
        max_response,
        argmax_kernel,
        active,
    })
}

/// Fraction of positions no kernel accepts: (M·N − Σ active) / (M·N).
pub fn inactive_ratio(map: &ActivationMap) -> f64 {
    if map.is_empty() {
        return 1.0;
    }
    let total = map.len();
    (total - map.active_count()) as f64 / total as f64
}
