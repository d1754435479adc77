use super::{ActivationMap, GrowthConfig, GrowthError};
use crate::numerics::{sigmoid, GrowableLayer, Kernel, Patch, Tensor3};

/// Positions (row, col) of the `n` most strongly accepted patches, strongest
/// first; equal responses keep row-major order.
pub fn negative_positions(map: &ActivationMap, n: usize) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..map.len()).filter(|&i| map.active[i]).collect();
    idx.sort_by(|&a, &b| map.max_response[b].total_cmp(&map.max_response[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx.into_iter().map(|i| map.position(i)).collect()
}

/// Patches the current layer already accepts most strongly; these become the
/// reject targets of a new kernel.
pub fn collect_negatives(
    layer: &GrowableLayer,
    image: &Tensor3,
    map: &ActivationMap,
    n: usize,
) -> Result<Vec<Patch>, GrowthError> {
    negative_positions(map, n)
        .into_iter()
        .map(|(r, c)| Ok(image.patch(r, c, layer.kernel_size())?))
        .collect()
}

/// A kernel after the accept/reject fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Generalized {
    pub kernel: Kernel,
    pub final_loss: f64,
    /// F(P_S) at the end of training.
    pub positive_response: f64,
    /// Mean F over the negatives at the end of training; `None` without negatives.
    pub mean_negative_response: Option<f64>,
}

/// Loss (F(P_S) − λ)² + mean F(s)² over the negatives, with F the sigmoid response.
pub fn generalization_loss(kernel: &Kernel, positive: &Patch, negatives: &[Patch], lambda: f64) -> f64 {
    let fp = sigmoid(kernel.preactivation_slice(positive.values()));
    let mut loss = (fp - lambda).powi(2);
    if !negatives.is_empty() {
        loss += negatives
            .iter()
            .map(|s| sigmoid(kernel.preactivation_slice(s.values())).powi(2))
            .sum::<f64>()
            / negatives.len() as f64;
    }
    loss
}

/// Full-batch gradient descent on [`generalization_loss`], touching only
/// this kernel's weights and bias.
pub fn generalize_kernel(
    kernel: Kernel,
    positive: &Patch,
    negatives: &[Patch],
    config: &GrowthConfig,
) -> Result<Generalized, GrowthError> {
    let n = kernel.len();
    if positive.values().len() != n {
        return Err(GrowthError::ShapeMismatch {
            expected: n,
            actual: positive.values().len(),
        });
    }
    if let Some(bad) = negatives.iter().find(|s| s.values().len() != n) {
        return Err(GrowthError::ShapeMismatch {
            expected: n,
            actual: bad.values().len(),
        });
    }
    let lambda = config.lambda();
    let lr = config.train_lr;
    let neg_scale = if negatives.is_empty() {
        0.0
    } else {
        2.0 / negatives.len() as f64
    };
    let mut kernel = kernel;
    let mut grad_w = vec![0.0; n];
    for _ in 0..config.train_steps {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let fp = sigmoid(kernel.preactivation_slice(positive.values()));
        let dz = 2.0 * (fp - lambda) * fp * (1.0 - fp);
        let mut grad_b = dz;
        axpy(&mut grad_w, dz, positive.values());
        for s in negatives {
            let f = sigmoid(kernel.preactivation_slice(s.values()));
            let dz = neg_scale * f * f * (1.0 - f);
            grad_b += dz;
            axpy(&mut grad_w, dz, s.values());
        }
        for (w, g) in kernel.weights.iter_mut().zip(&grad_w) {
            *w -= lr * g;
        }
        kernel.bias -= lr * grad_b;
    }
    let final_loss = generalization_loss(&kernel, positive, negatives, lambda);
    if !final_loss.is_finite() || !kernel.is_finite() {
        return Err(GrowthError::NonFiniteLoss);
    }
    let positive_response = sigmoid(kernel.preactivation_slice(positive.values()));
    let mean_negative_response = (!negatives.is_empty()).then(|| {
        negatives
            .iter()
            .map(|s| sigmoid(kernel.preactivation_slice(s.values())))
            .sum::<f64>()
            / negatives.len() as f64
    });
    Ok(Generalized {
        kernel,
        final_loss,
        positive_response,
        mean_negative_response,
    })
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}
