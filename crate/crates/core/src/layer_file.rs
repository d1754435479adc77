//! JSON persistence for grown layers. Weights are written in the shortest
//! decimal form that parses back to the same 64-bit value, so
//! save → load → save is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{GrowableLayer, Kernel};

pub const LAYER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LayerFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("unsupported layer format_version {found} (expected {LAYER_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("invalid layer file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    /// Row-major (row, col, channel) weights.
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub dataset: String,
    pub n_images: usize,
    /// SHA-256 of the growth configuration's JSON form.
    pub config_hash: String,
    pub growth_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub format_version: u32,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub alpha: f64,
    pub kernels: Vec<KernelRecord>,
    pub provenance: Provenance,
}

/// Hex SHA-256 of `value` serialized as compact JSON.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl LayerFile {
    pub fn from_layer(layer: &GrowableLayer, provenance: Provenance) -> Self {
        Self {
            format_version: LAYER_FORMAT_VERSION,
            kernel_size: layer.kernel_size(),
            in_channels: layer.in_channels(),
            alpha: layer.alpha(),
            kernels: layer
                .kernels()
                .iter()
                .map(|k| KernelRecord {
                    weights: k.weights.clone(),
                    bias: k.bias,
                })
                .collect(),
            provenance,
        }
    }

    pub fn to_layer(&self) -> Result<GrowableLayer, LayerFileError> {
        if self.format_version != LAYER_FORMAT_VERSION {
            return Err(LayerFileError::Version {
                found: self.format_version,
            });
        }
        let want = self.kernel_size * self.kernel_size * self.in_channels;
        for (i, k) in self.kernels.iter().enumerate() {
            if k.weights.len() != want {
                return Err(LayerFileError::Invalid(format!(
                    "kernel {i} has {} weights, expected {want} ({}x{}x{})",
                    k.weights.len(),
                    self.kernel_size,
                    self.kernel_size,
                    self.in_channels
                )));
            }
        }
        let kernels = self.kernels.iter().map(|k| Kernel::new(k.weights.clone(), k.bias)).collect();
        GrowableLayer::with_kernels(self.kernel_size, self.in_channels, self.alpha, kernels)
            .map_err(|e| LayerFileError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layer file serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LayerFileError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| LayerFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads and validates a layer file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LayerFileError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LayerFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: LayerFile = serde_json::from_str(&text).map_err(|source| LayerFileError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        file.to_layer()?;
        Ok(file)
    }
}
