//! Unsupervised growth of convolutional layers, driven by the image patches a
//! layer fails to recognize, plus the small supervised stack used to judge
//! grown layers inside classifiers.

pub mod config;
pub mod data;
pub mod growth;
pub mod layer_file;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod viz;
pub mod workflows;
