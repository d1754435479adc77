//! Versioned JSON form of a [`ClassifierModel`].
//!
//! Conv weights are stored kernel-major, each kernel in (row, col, channel)
//! order; dense weights are out × in, row-major, and the dense input is the
//! pooled map flattened in (row, col, channel) order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierModel, ConvBlock, DenseBlock, Layer, LayerSlot, ModelError, Topology};
use crate::numerics::Activation;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    /// "conv", "maxpool2", "dense" or "output".
    pub kind: String,
    /// conv: [kernel_size, in_channels, out_channels]; dense/output: [n_in, n_out]; pool: [].
    pub dims: Vec<usize>,
    pub frozen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub topology: Topology,
    pub n_classes: usize,
    /// [height, width, channels]
    pub input_shape: [usize; 3],
    pub rng_seed: u64,
    pub layers: Vec<LayerRecord>,
}

impl ModelFile {
    pub fn from_model(m: &ClassifierModel) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|slot| {
                let (dims, activation, weights, bias) = match &slot.layer {
                    Layer::Conv(c) => (
                        vec![c.kernel_size, c.in_channels, c.out_channels],
                        Some(c.activation),
                        c.weights.clone(),
                        c.bias.clone(),
                    ),
                    Layer::Dense(d) | Layer::Output(d) => {
                        (vec![d.n_in, d.n_out], Some(d.activation), d.weights.clone(), d.bias.clone())
                    }
                    Layer::MaxPool2 => (Vec::new(), None, Vec::new(), Vec::new()),
                };
                LayerRecord {
                    kind: slot.layer.kind().to_string(),
                    dims,
                    frozen: slot.frozen,
                    activation,
                    weights,
                    bias,
                }
            })
            .collect();
        let (h, w, c) = m.input_shape;
        Self {
            format_version: MODEL_FORMAT_VERSION,
            topology: m.topology,
            n_classes: m.n_classes,
            input_shape: [h, w, c],
            rng_seed: m.rng_seed,
            layers,
        }
    }

    /// Rebuilds the model, checking every array length and the layer
    /// sequence against the declared topology.
    pub fn to_model(&self) -> Result<ClassifierModel, ModelError> {
        let bad = |msg: String| Err(ModelError::Format(msg));
        if self.format_version != MODEL_FORMAT_VERSION {
            return bad(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            ));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, r) in self.layers.iter().enumerate() {
            let act = || {
                r.activation
                    .ok_or_else(|| ModelError::Format(format!("layer {i}: missing activation")))
            };
            let check = |n_w: usize, n_b: usize| {
                if r.weights.len() != n_w || r.bias.len() != n_b {
                    return Err(ModelError::Format(format!(
                        "layer {i} ({}): expected {n_w} weights and {n_b} biases, found {} and {}",
                        r.kind,
                        r.weights.len(),
                        r.bias.len()
                    )));
                }
                if r.weights.iter().chain(&r.bias).any(|v| !v.is_finite()) {
                    return Err(ModelError::Format(format!("layer {i}: non-finite parameter")));
                }
                Ok(())
            };
            let layer = match (r.kind.as_str(), r.dims.as_slice()) {
                ("conv", &[k, c, n]) => {
                    check(n * k * k * c, n)?;
                    Layer::Conv(ConvBlock {
                        kernel_size: k,
                        in_channels: c,
                        out_channels: n,
                        weights: r.weights.clone(),
                        bias: r.bias.clone(),
                        activation: act()?,
                    })
                }
                ("maxpool2", &[]) => Layer::MaxPool2,
                (kind @ ("dense" | "output"), &[n_in, n_out]) => {
                    check(n_in * n_out, n_out)?;
                    let d = DenseBlock {
                        n_in,
                        n_out,
                        weights: r.weights.clone(),
                        bias: r.bias.clone(),
                        activation: act()?,
                    };
                    if kind == "dense" {
                        Layer::Dense(d)
                    } else {
                        Layer::Output(d)
                    }
                }
                (kind, dims) => return bad(format!("layer {i}: unknown kind {kind:?} with dims {dims:?}")),
            };
            layers.push(LayerSlot {
                frozen: r.frozen && layer.is_parameterized(),
                layer,
            });
        }
        let [h, w, c] = self.input_shape;
        let model = ClassifierModel {
            topology: self.topology,
            input_shape: (h, w, c),
            n_classes: self.n_classes,
            layers,
            rng_seed: self.rng_seed,
        };
        model.check_consistency()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| ModelError::Format(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
    }
}

impl ClassifierModel {
    /// Verifies that the stack matches the topology and that shapes chain
    /// from the input to `n_classes` logits.
    pub fn check_consistency(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Format(msg));
        let expected: Vec<&str> = match self.topology {
            Topology::Model1 => vec!["conv", "maxpool2", "conv", "maxpool2", "dense", "output"],
            Topology::Model2 => vec!["conv", "maxpool2", "dense", "output"],
        };
        let kinds: Vec<&str> = self.layers.iter().map(|s| s.layer.kind()).collect();
        if kinds != expected {
            return bad(format!("{} expects layers {expected:?}, found {kinds:?}", self.topology));
        }
        let (mut h, mut w, mut c) = self.input_shape;
        for (i, slot) in self.layers.iter().enumerate() {
            match &slot.layer {
                Layer::Conv(b) => {
                    if b.in_channels != c || h < b.kernel_size || w < b.kernel_size {
                        return bad(format!("layer {i}: conv does not fit a {h}x{w}x{c} input"));
                    }
                    h = h - b.kernel_size + 1;
                    w = w - b.kernel_size + 1;
                    c = b.out_channels;
                }
                Layer::MaxPool2 => {
                    h /= 2;
                    w /= 2;
                }
                Layer::Dense(d) | Layer::Output(d) => {
                    if d.n_in != h * w * c {
                        return bad(format!("layer {i}: expects {} inputs, receives {}", d.n_in, h * w * c));
                    }
                    (h, w, c) = (1, 1, d.n_out);
                }
            }
        }
        if c != self.n_classes {
            return bad(format!("output width {c} differs from n_classes {}", self.n_classes));
        }
        Ok(())
    }
}
