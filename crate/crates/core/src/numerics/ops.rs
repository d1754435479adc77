use serde::{Deserialize, Serialize};

use super::kernel::dot;
use super::{GrowableLayer, Kernel, NumericsError, Tensor3};

/// Logistic function 1 / (1 + e^(-x)), evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pointwise nonlinearity applied after a conv or dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Stride-1, unpadded convolution of `input` with the layer's kernels,
/// followed by the sigmoid. Output is (H−k+1)×(W−k+1)×|kernels|.
pub fn conv2d_valid(input: &Tensor3, layer: &GrowableLayer) -> Result<Tensor3, NumericsError> {
    conv2d_kernels(
        input,
        layer.kernel_size(),
        layer.in_channels(),
        layer.kernels(),
        Activation::Sigmoid,
    )
}

pub fn conv2d_kernels(
    input: &Tensor3,
    kernel_size: usize,
    in_channels: usize,
    kernels: &[Kernel],
    activation: Activation,
) -> Result<Tensor3, NumericsError> {
    check_conv_input(input, kernel_size, in_channels)?;
    let out_h = input.height() - kernel_size + 1;
    let out_w = input.width() - kernel_size + 1;
    let n_out = kernels.len();
    let mut out = vec![0.0; out_h * out_w * n_out];
    let mut patch = vec![0.0; kernel_size * kernel_size * in_channels];
    for r in 0..out_h {
        for c in 0..out_w {
            input.extract_patch_into(r, c, kernel_size, &mut patch);
            let base = (r * out_w + c) * n_out;
            for (o, kernel) in kernels.iter().enumerate() {
                out[base + o] = activation.apply(dot(&kernel.weights, &patch) + kernel.bias);
            }
        }
    }
    Tensor3::from_vec(out_h, out_w, n_out, out)
}

pub(crate) fn check_conv_input(
    input: &Tensor3,
    kernel_size: usize,
    in_channels: usize,
) -> Result<(), NumericsError> {
    if input.channels() != in_channels {
        return Err(NumericsError::ChannelMismatch {
            expected: in_channels,
            actual: input.channels(),
        });
    }
    if input.height() < kernel_size || input.width() < kernel_size {
        return Err(NumericsError::InputTooSmall {
            height: input.height(),
            width: input.width(),
            min: kernel_size,
        });
    }
    Ok(())
}

/// Result of a 2×2 max pool: the pooled tensor plus, for every output
/// element, the flat index of the input element that won.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor3,
    pub argmax: Vec<usize>,
}

/// Non-overlapping 2×2 max pool; a trailing odd row or column is dropped.
pub fn max_pool_2x2(input: &Tensor3) -> Result<Pooled, NumericsError> {
    if input.height() < 2 || input.width() < 2 {
        return Err(NumericsError::InputTooSmall {
            height: input.height(),
            width: input.width(),
            min: 2,
        });
    }
    let (oh, ow, ch) = (input.height() / 2, input.width() / 2, input.channels());
    let data = input.data();
    let mut out = vec![0.0; oh * ow * ch];
    let mut argmax = vec![0; oh * ow * ch];
    for r in 0..oh {
        for c in 0..ow {
            for k in 0..ch {
                let mut best_i = input.index(2 * r, 2 * c, k);
                let mut best = data[best_i];
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let i = input.index(2 * r + dr, 2 * c + dc, k);
                    if data[i] > best {
                        best = data[i];
                        best_i = i;
                    }
                }
                let o = (r * ow + c) * ch + k;
                out[o] = best;
                argmax[o] = best_i;
            }
        }
    }
    Ok(Pooled {
        output: Tensor3::from_vec(oh, ow, ch, out)?,
        argmax,
    })
}

/// Routes each pooled gradient back to the input position that produced the max.
pub fn max_pool_2x2_backward(grad_output: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut grad = vec![0.0; input_len];
    for (g, &i) in grad_output.iter().zip(argmax) {
        grad[i] += g;
    }
    grad
}

/// activation(W·x + b) with `weights` stored row-major as out×in.
pub fn dense_forward(
    input: &[f64],
    weights: &[f64],
    bias: &[f64],
    activation: Activation,
) -> Result<Vec<f64>, NumericsError> {
    if weights.len() != bias.len() * input.len() {
        return Err(NumericsError::Length {
            what: "dense weight matrix",
            expected: bias.len() * input.len(),
            actual: weights.len(),
        });
    }
    let n_in = input.len();
    Ok(bias
        .iter()
        .enumerate()
        .map(|(o, b)| activation.apply(dot(&weights[o * n_in..(o + 1) * n_in], input) + b))
        .collect())
}

/// Softmax over `logits` and the cross-entropy loss −log p[label].
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NumericsError> {
    if label >= logits.len() {
        return Err(NumericsError::LabelOutOfRange {
            label,
            n_classes: logits.len(),
        });
    }
    let probs = softmax(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = -(logits[label] - max - log_sum);
    Ok((loss, probs))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(close(sigmoid(0.5), 0.6224593312018546, 1e-15));
        assert!(close(sigmoid(1.0), 0.7310585786300049, 1e-15));
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn conv_zero_image_gives_half() {
        let layer =
            GrowableLayer::with_kernels(2, 1, 0.6, vec![Kernel::new(vec![1.0; 4], 0.0)]).unwrap();
        let out = conv2d_valid(&Tensor3::zeros(3, 3, 1), &layer).unwrap();
        assert_eq!(out.shape(), (2, 2, 1));
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn conv_single_position_hand_value() {
        let img = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let layer =
            GrowableLayer::with_kernels(2, 1, 0.6, vec![Kernel::new(vec![1.0, 0.0, 0.0, 1.0], 0.0)])
                .unwrap();
        let out = conv2d_valid(&img, &layer).unwrap();
        assert_eq!(out.shape(), (1, 1, 1));
        assert!(close(out.data()[0], sigmoid(5.0), 1e-15));
    }

    #[test]
    fn conv_identity_kernel_is_elementwise_sigmoid() {
        let img = Tensor3::from_vec(2, 3, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let layer = GrowableLayer::with_kernels(1, 1, 0.6, vec![Kernel::new(vec![1.0], 0.0)]).unwrap();
        let out = conv2d_valid(&img, &layer).unwrap();
        for (o, i) in out.data().iter().zip(img.data()) {
            assert!(close(*o, sigmoid(*i), 1e-15));
        }
    }

    #[test]
    fn conv_reports_channel_and_size_errors() {
        let layer = GrowableLayer::with_kernels(3, 2, 0.6, vec![Kernel::new(vec![0.0; 18], 0.0)])
            .unwrap();
        match conv2d_valid(&Tensor3::zeros(5, 5, 1), &layer) {
            Err(NumericsError::ChannelMismatch { expected: 2, actual: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            conv2d_valid(&Tensor3::zeros(2, 5, 2), &layer),
            Err(NumericsError::InputTooSmall { .. })
        ));
    }

    #[test]
    fn pool_cases() {
        let c = Tensor3::filled(4, 4, 2, 0.3);
        let p = max_pool_2x2(&c).unwrap();
        assert_eq!(p.output.shape(), (2, 2, 2));
        assert!(p.output.data().iter().all(|&v| v == 0.3));

        let t = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = max_pool_2x2(&t).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);

        // 3×3 truncates to a single window over the top-left 2×2 block.
        let t = Tensor3::from_vec(3, 3, 1, vec![1.0, 5.0, 9.0, 2.0, 3.0, 9.0, 9.0, 9.0, 9.0]).unwrap();
        let p = max_pool_2x2(&t).unwrap();
        assert_eq!(p.output.shape(), (1, 1, 1));
        assert_eq!(p.output.data(), &[5.0]);

        assert!(max_pool_2x2(&Tensor3::zeros(1, 4, 1)).is_err());
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let t = Tensor3::from_vec(2, 4, 1, vec![1.0, 0.0, 0.0, 7.0, 0.5, 0.2, 0.1, 0.3]).unwrap();
        let p = max_pool_2x2(&t).unwrap();
        let g = max_pool_2x2_backward(&[2.0, 3.0], &p.argmax, t.len());
        assert_eq!(g, vec![2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_cases() {
        assert_eq!(
            dense_forward(&[1.0, 2.0], &[0.0; 4], &[0.0; 2], Activation::Relu).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            dense_forward(&[3.0, -2.0], &[1.0, 0.0, 0.0, 1.0], &[0.0; 2], Activation::Identity)
                .unwrap(),
            vec![3.0, -2.0]
        );
        // [[1, 2], [-3, 0.5]]·[2, 1] + [0.5, 1] = [4.5, -4.5] → relu → [4.5, 0]
        assert_eq!(
            dense_forward(&[2.0, 1.0], &[1.0, 2.0, -3.0, 0.5], &[0.5, 1.0], Activation::Relu).unwrap(),
            vec![4.5, 0.0]
        );
        assert!(dense_forward(&[1.0], &[1.0, 2.0, 3.0], &[0.0, 0.0], Activation::Relu).is_err());
    }

    #[test]
    fn softmax_cross_entropy_cases() {
        let (loss, p) = softmax_cross_entropy(&[0.3; 5], 2).unwrap();
        assert!(close(loss, 5f64.ln(), 1e-12));
        assert!(p.iter().all(|&v| close(v, 0.2, 1e-12)));

        let (loss, p) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));

        // −log(e³ / (e + e² + e³)) = log(1 + e⁻¹ + e⁻²)
        let (loss, _) = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap();
        let oracle = (1.0 + (-1f64).exp() + (-2f64).exp()).ln();
        assert!(close(loss, oracle, 1e-14));
        assert!(close(loss, 0.40760596444437994, 1e-12));

        assert!(matches!(
            softmax_cross_entropy(&[0.0, 1.0], 2),
            Err(NumericsError::LabelOutOfRange { .. })
        ));
    }
}
