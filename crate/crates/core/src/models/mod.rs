//! The two small classifier stacks used to judge grown layers, with per-layer
//! freezing and substitution of grown convolutional layers.
//!
//! Layers are addressed by their *parameter index*: the position among
//! parameterized layers only. In model 1 that is conv0 = 0, conv1 = 1,
//! dense = 2, output = 3; in model 2 it is conv0 = 0, dense = 1, output = 2.

mod backprop;
mod file;
mod train;

pub use backprop::{Gradients, ParamGrad, Trace};
pub use file::{ModelFile, LayerRecord, MODEL_FORMAT_VERSION};
pub use train::{predict_scores, train_supervised, EpochStats, History, TrainConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::numerics::{Activation, GrowableLayer, Kernel, NumericsError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(
        "substitution for conv layer {index} is incompatible: expected kernel size {expected_kernel} \
         with {expected_channels} input channels, got kernel size {actual_kernel} with {actual_channels}"
    )]
    IncompatibleSubstitution {
        index: usize,
        expected_kernel: usize,
        expected_channels: usize,
        actual_kernel: usize,
        actual_channels: usize,
    },
    #[error("layer index {0} does not name a parameterized layer")]
    NoSuchLayer(usize),
    #[error("substitution target {0} is not a convolutional layer")]
    NotConv(usize),
    #[error("input {actual:?} does not match model input {expected:?}")]
    InputShape {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("dataset has {dataset} classes but the model has {model}")]
    ClassMismatch { dataset: usize, model: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// conv(k=4) → pool → conv(k=3) → pool → dense → output
    Model1,
    /// conv(k=4) → pool → dense → output
    Model2,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Model1 => "model1",
            Topology::Model2 => "model2",
        })
    }
}

impl std::str::FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "model1" => Ok(Topology::Model1),
            "model2" => Ok(Topology::Model2),
            _ => Err(format!("unknown topology {s:?} (expected model1 or model2)")),
        }
    }
}

impl Topology {
    /// Kernel sizes of the convolutional layers, in order.
    pub fn conv_kernel_sizes(self) -> &'static [usize] {
        match self {
            Topology::Model1 => &[4, 3],
            Topology::Model2 => &[4],
        }
    }
}

/// Stride-1 valid convolution with per-kernel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// out_channels × (k·k·in_channels), each row in (row, col, channel) order.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl ConvBlock {
    pub fn patch_len(&self) -> usize {
        self.kernel_size * self.kernel_size * self.in_channels
    }

    pub fn from_layer(layer: &GrowableLayer, activation: Activation) -> Self {
        Self {
            kernel_size: layer.kernel_size(),
            in_channels: layer.in_channels(),
            out_channels: layer.len(),
            weights: layer.kernels().iter().flat_map(|k| k.weights.iter().copied()).collect(),
            bias: layer.kernels().iter().map(|k| k.bias).collect(),
            activation,
        }
    }

    pub fn kernels(&self) -> Vec<Kernel> {
        self.weights
            .chunks(self.patch_len())
            .zip(&self.bias)
            .map(|(w, &b)| Kernel::new(w.to_vec(), b))
            .collect()
    }
}

/// Fully connected layer; weights are out × in, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvBlock),
    MaxPool2,
    Dense(DenseBlock),
    /// Final dense layer producing logits (identity activation).
    Output(DenseBlock),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::MaxPool2 => "maxpool2",
            Layer::Dense(_) => "dense",
            Layer::Output(_) => "output",
        }
    }

    pub fn is_parameterized(&self) -> bool {
        !matches!(self, Layer::MaxPool2)
    }

    pub(crate) fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) | Layer::Output(d) => Some((&d.weights, &d.bias)),
            Layer::MaxPool2 => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) | Layer::Output(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::MaxPool2 => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlot {
    pub layer: Layer,
    pub frozen: bool,
}

/// A realized classifier: layer stack with parameters and freeze flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub topology: Topology,
    pub input_shape: (usize, usize, usize),
    pub n_classes: usize,
    pub layers: Vec<LayerSlot>,
    pub rng_seed: u64,
}

/// How to realize a topology.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Kernel counts for ordinary (non-substituted) conv layers.
    pub conv_kernels: Vec<usize>,
    pub hidden: usize,
    pub conv_activation: Activation,
    /// Conv layers replaced by grown layers, by conv index.
    pub substitutions: BTreeMap<usize, GrowableLayer>,
    /// Parameter indices to freeze.
    pub freeze: BTreeSet<usize>,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            conv_kernels: vec![32, 32],
            hidden: 128,
            conv_activation: Activation::Sigmoid,
            substitutions: BTreeMap::new(),
            freeze: BTreeSet::new(),
            seed: 0,
        }
    }
}

fn uniform_init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Realizes `topology` for `input_shape` images and `n_classes` outputs.
/// Ordinary layers draw weights and biases from U(−b, b), b = 1/√fan_in.
pub fn build_model(
    topology: Topology,
    input_shape: (usize, usize, usize),
    n_classes: usize,
    opts: &BuildOptions,
) -> Result<ClassifierModel, ModelError> {
    let conv_sizes = topology.conv_kernel_sizes();
    if let Some(&i) = opts.substitutions.keys().find(|&&i| i >= conv_sizes.len()) {
        return Err(ModelError::NotConv(i));
    }
    if n_classes < 2 {
        return Err(ModelError::Invalid(format!("need at least 2 classes, got {n_classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut h, mut w, mut c) = input_shape;
    let mut layers = Vec::new();
    for (ci, &k) in conv_sizes.iter().enumerate() {
        if h < k || w < k {
            return Err(ModelError::Invalid(format!(
                "a {h}x{w} input is too small for conv layer {ci} (kernel {k})"
            )));
        }
        let block = match opts.substitutions.get(&ci) {
            Some(layer) => {
                if layer.kernel_size() != k || layer.in_channels() != c {
                    return Err(ModelError::IncompatibleSubstitution {
                        index: ci,
                        expected_kernel: k,
                        expected_channels: c,
                        actual_kernel: layer.kernel_size(),
                        actual_channels: layer.in_channels(),
                    });
                }
                if layer.is_empty() {
                    return Err(ModelError::Invalid(format!("substituted conv layer {ci} has no kernels")));
                }
                ConvBlock::from_layer(layer, Activation::Sigmoid)
            }
            None => {
                let out = *opts.conv_kernels.get(ci).ok_or_else(|| {
                    ModelError::Invalid(format!("no kernel count given for conv layer {ci}"))
                })?;
                let fan_in = k * k * c;
                ConvBlock {
                    kernel_size: k,
                    in_channels: c,
                    out_channels: out,
                    weights: uniform_init(&mut rng, out * fan_in, fan_in),
                    bias: uniform_init(&mut rng, out, fan_in),
                    activation: opts.conv_activation,
                }
            }
        };
        h = h - k + 1;
        w = w - k + 1;
        c = block.out_channels;
        layers.push(Layer::Conv(block));
        if h < 2 || w < 2 {
            return Err(ModelError::Invalid(format!("feature map {h}x{w} too small to pool")));
        }
        layers.push(Layer::MaxPool2);
        h /= 2;
        w /= 2;
    }
    let flat = h * w * c;
    layers.push(Layer::Dense(DenseBlock {
        n_in: flat,
        n_out: opts.hidden,
        weights: uniform_init(&mut rng, opts.hidden * flat, flat),
        bias: uniform_init(&mut rng, opts.hidden, flat),
        activation: Activation::Relu,
    }));
    layers.push(Layer::Output(DenseBlock {
        n_in: opts.hidden,
        n_out: n_classes,
        weights: uniform_init(&mut rng, n_classes * opts.hidden, opts.hidden),
        bias: uniform_init(&mut rng, n_classes, opts.hidden),
        activation: Activation::Identity,
    }));

    let n_params = layers.iter().filter(|l| l.is_parameterized()).count();
    if let Some(&bad) = opts.freeze.iter().find(|&&i| i >= n_params) {
        return Err(ModelError::NoSuchLayer(bad));
    }
    let mut p = 0;
    let layers = layers
        .into_iter()
        .map(|layer| {
            let frozen = layer.is_parameterized() && opts.freeze.contains(&p);
            if layer.is_parameterized() {
                p += 1;
            }
            LayerSlot { layer, frozen }
        })
        .collect();
    Ok(ClassifierModel {
        topology,
        input_shape,
        n_classes,
        layers,
        rng_seed: opts.seed,
    })
}

impl ClassifierModel {
    /// Stack indices of the parameterized layers, in order.
    pub fn param_layer_indices(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].layer.is_parameterized()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|s| s.layer.param_count()).sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layers.iter().filter(|s| !s.frozen).map(|s| s.layer.param_count()).sum()
    }

    /// The conv block with conv index `i` (0-based among conv layers).
    pub fn conv(&self, i: usize) -> Option<&ConvBlock> {
        self.layers
            .iter()
            .filter_map(|s| match &s.layer {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .nth(i)
    }

    /// Input length of the hidden dense layer.
    pub fn dense_input_len(&self) -> usize {
        self.layers
            .iter()
            .find_map(|s| match &s.layer {
                Layer::Dense(d) => Some(d.n_in),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Flat copy of every parameter of parameter-layer `p` (weights then bias).
    pub fn param_snapshot(&self, p: usize) -> Option<Vec<f64>> {
        let i = *self.param_layer_indices().get(p)?;
        self.layers[i].layer.params().map(|(w, b)| w.iter().chain(b).copied().collect())
    }
}
