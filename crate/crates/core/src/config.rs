//! The fully resolved settings of one command: a JSON file, overridden by
//! flags, echoed next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar, load_idx, CifarVariant, DataError, Dataset};
use crate::growth::GrowthConfig;
use crate::models::{TrainConfig, Topology};
use crate::numerics::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// Detected from the file names present in the dataset directory.
    #[default]
    Auto,
    Idx,
    Cifar10,
    Cifar100,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "idx" => Ok(Self::Idx),
            "cifar10" => Ok(Self::Cifar10),
            "cifar100" => Ok(Self::Cifar100),
            _ => Err(format!("unknown dataset format {s:?} (auto, idx, cifar10, cifar100)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

const IDX_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];
const CIFAR10_TRAIN: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];

/// Resolves `Auto` by looking for the standard file names under `dir`.
pub fn detect_format(dir: &Path) -> Result<DatasetFormat, DataError> {
    if dir.join(IDX_FILES[0].0).is_file() {
        Ok(DatasetFormat::Idx)
    } else if dir.join(CIFAR10_TRAIN[0]).is_file() {
        Ok(DatasetFormat::Cifar10)
    } else if dir.join("train.bin").is_file() {
        Ok(DatasetFormat::Cifar100)
    } else {
        Err(DataError::Invalid(format!(
            "{}: no IDX (train-images-idx3-ubyte), CIFAR-10 (data_batch_1.bin) or CIFAR-100 (train.bin) files found",
            dir.display()
        )))
    }
}

/// Loads one split of the dataset stored in `dir` under its usual file names.
pub fn load_dataset(dir: &Path, format: DatasetFormat, split: Split) -> Result<Dataset, DataError> {
    let format = match format {
        DatasetFormat::Auto => detect_format(dir)?,
        f => f,
    };
    match (format, split) {
        (DatasetFormat::Idx, s) => {
            let (i, l) = IDX_FILES[usize::from(s == Split::Test)];
            load_idx(dir.join(i), dir.join(l))
        }
        (DatasetFormat::Cifar10, Split::Train) => {
            let paths: Vec<PathBuf> = CIFAR10_TRAIN.iter().map(|f| dir.join(f)).collect();
            load_cifar(&paths, CifarVariant::Cifar10)
        }
        (DatasetFormat::Cifar10, Split::Test) => load_cifar(&[dir.join("test_batch.bin")], CifarVariant::Cifar10),
        (DatasetFormat::Cifar100, s) => {
            let f = if s == Split::Train { "train.bin" } else { "test.bin" };
            load_cifar(&[dir.join(f)], CifarVariant::Cifar100Fine)
        }
        (DatasetFormat::Auto, _) => unreachable!("resolved above"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the dataset files.
    pub path: Option<PathBuf>,
    pub format: DatasetFormat,
    /// Images sampled from the training split for growth.
    pub images: usize,
    /// Seed of every subset draw (growth images, train and eval subsets).
    pub sample_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: DatasetFormat::Auto,
            images: 1500,
            sample_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub topology: Topology,
    pub hidden: usize,
    /// Kernel counts of ordinary conv layers.
    pub conv_kernels: Vec<usize>,
    pub conv_activation: Activation,
    /// Grown layer files substituted for conv 0 and conv 1.
    pub sub0: Option<PathBuf>,
    pub sub1: Option<PathBuf>,
    /// Parameter indices to freeze.
    pub freeze: Vec<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Model2,
            hidden: 128,
            conv_kernels: vec![32, 32],
            conv_activation: Activation::Sigmoid,
            sub0: None,
            sub1: None,
            freeze: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    /// Kernel size of a layer being grown.
    pub kernel_size: usize,
    pub growth: GrowthConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// Layer file consumed by grow-layer2, transfer and viz.
    pub layer: Option<PathBuf>,
    /// Whether transfer grows the loaded layer on the target images.
    pub expand: bool,
    /// Image index rendered by viz.
    pub image: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            kernel_size: 4,
            growth: GrowthConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            layer: None,
            expand: false,
            image: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
