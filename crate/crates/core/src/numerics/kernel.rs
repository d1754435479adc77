use serde::{Deserialize, Serialize};

use super::{sigmoid, NumericsError, Patch};

/// One pattern detector: a k×k×C weight block plus a scalar bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Kernel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// ⟨W, x⟩ + b on a raw value slice; no shape checking.
    #[inline]
    pub fn preactivation_slice(&self, values: &[f64]) -> f64 {
        dot(&self.weights, values) + self.bias
    }

    pub fn preactivation(&self, patch: &Patch) -> Result<f64, NumericsError> {
        if patch.values().len() != self.weights.len() {
            return Err(NumericsError::Length {
                what: "patch for kernel",
                expected: self.weights.len(),
                actual: patch.values().len(),
            });
        }
        Ok(self.preactivation_slice(patch.values()))
    }

    /// σ(⟨W, P⟩ + b).
    pub fn response(&self, patch: &Patch) -> Result<f64, NumericsError> {
        self.preactivation(patch).map(sigmoid)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociation flags.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

/// The growing convolutional layer: an append-only kernel list sharing one
/// kernel size, input depth and activation threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowableLayer {
    kernel_size: usize,
    in_channels: usize,
    alpha: f64,
    kernels: Vec<Kernel>,
}

impl GrowableLayer {
    pub fn new(kernel_size: usize, in_channels: usize, alpha: f64) -> Result<Self, NumericsError> {
        if kernel_size == 0 || in_channels == 0 {
            return Err(NumericsError::InvalidArgument(format!(
                "kernel_size ({kernel_size}) and in_channels ({in_channels}) must be positive"
            )));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(NumericsError::InvalidArgument(format!(
                "activation threshold alpha must lie in (0.5, 1), got {alpha}"
            )));
        }
        Ok(Self {
            kernel_size,
            in_channels,
            alpha,
            kernels: Vec::new(),
        })
    }

    pub fn with_kernels(
        kernel_size: usize,
        in_channels: usize,
        alpha: f64,
        kernels: Vec<Kernel>,
    ) -> Result<Self, NumericsError> {
        let mut layer = Self::new(kernel_size, in_channels, alpha)?;
        for k in kernels {
            layer.push(k)?;
        }
        Ok(layer)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Number of weights in each kernel (k²·C).
    pub fn patch_len(&self) -> usize {
        self.kernel_size * self.kernel_size * self.in_channels
    }

    /// Appends a kernel. Existing kernels are never touched.
    pub fn push(&mut self, kernel: Kernel) -> Result<(), NumericsError> {
        if kernel.len() != self.patch_len() {
            return Err(NumericsError::Length {
                what: "kernel weights",
                expected: self.patch_len(),
                actual: kernel.len(),
            });
        }
        if !kernel.is_finite() {
            return Err(NumericsError::NonFinite("kernel appended to layer".into()));
        }
        self.kernels.push(kernel);
        Ok(())
    }
}
