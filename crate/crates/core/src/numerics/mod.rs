//! Tensor arithmetic, layer primitives and optimizer steps shared by layer
//! growth and supervised training.
//!
//! Note the symbol overload in the growth literature: "C" names both the
//! convolutional layer and the unit-response weight matrix. Here the layer is
//! [`GrowableLayer`] and the matrix is just [`Kernel::weights`].

mod kernel;
mod ops;
mod sgd;
mod tensor;

pub use kernel::{GrowableLayer, Kernel};
pub(crate) use kernel::dot;
pub use ops::{
    conv2d_kernels, conv2d_valid, dense_forward, max_pool_2x2, max_pool_2x2_backward, sigmoid,
    softmax, softmax_cross_entropy, Activation, Pooled,
};
pub(crate) use ops::check_conv_input;
pub use sgd::{sgd_update, Sgd};
pub use tensor::{Patch, Tensor3};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{what}: expected length {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("channel mismatch: expected {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("input {height}x{width} is smaller than the {min}x{min} window")]
    InputTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("patch at ({row}, {col}) of side {side} exceeds {height}x{width} input")]
    PatchOutOfBounds {
        row: usize,
        col: usize,
        side: usize,
        height: usize,
        width: usize,
    },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
