//! Data-driven growth of a convolutional layer.
//!
//! The layer starts from a single black-patch detector. For each image the
//! driver measures which valid positions no kernel accepts, picks the most
//! strongly rejected patch, builds a kernel answering σ(1) on it, fits that
//! kernel to also reject patches the layer already accepts, and appends it.

mod activation;
mod config;
mod driver;
mod generalize;
mod init;

pub use activation::{activation_map, inactive_ratio, kernel_response, ActivationMap};
pub use config::{BoostMode, GrowthConfig};
pub use driver::{grow, rejection_order, GrowthLog, GrowthSummary, KernelRecord, StopReason};
pub use generalize::{
    collect_negatives, generalization_loss, generalize_kernel, negative_positions, Generalized,
};
pub use init::{
    boost_contrast, boost_contrast_literal, center_patch, init_kernel_from_patch, init_seed_layer,
    normalize_to_unit, KernelInit, CONTRAST_EPSILON,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("layer has no kernels")]
    EmptyLayer,
    #[error("patch has no contrast (constant values)")]
    NoContrast,
    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("kernel generalization produced a non-finite loss")]
    NonFiniteLoss,
    #[error("invalid growth config: {0}")]
    Config(String),
    #[error("failed to write growth log: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
