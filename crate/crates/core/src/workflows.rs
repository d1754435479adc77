//! End-to-end stages shared by the command-line tool and the acceptance
//! suite: growing layers, training classifiers around them, transfer and
//! rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ModelConfig, RunConfig};
use crate::data::{seeded_permutation, DataError, Dataset};
use crate::growth::{activation_map, grow, inactive_ratio, init_seed_layer, GrowthConfig, GrowthError, GrowthLog, GrowthSummary};
use crate::layer_file::{config_hash, LayerFile, LayerFileError, Provenance};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::models::{
    build_model, predict_scores, train_supervised, BuildOptions, ClassifierModel, History, ModelError, TrainConfig,
};
use crate::numerics::{conv2d_valid, max_pool_2x2, GrowableLayer, NumericsError, Tensor3};
use crate::viz;

/// Coarse failure category, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    LayerFile(#[from] LayerFileError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn numerics_class(e: &NumericsError) -> FailureClass {
    match e {
        NumericsError::NonFinite(_) => FailureClass::Numeric,
        NumericsError::InvalidArgument(_) => FailureClass::Config,
        _ => FailureClass::Data,
    }
}

impl WorkflowError {
    pub fn class(&self) -> FailureClass {
        use FailureClass::*;
        match self {
            WorkflowError::Config(_) => Config,
            WorkflowError::Data(_) | WorkflowError::LayerFile(_) => Data,
            WorkflowError::Numerics(e) => numerics_class(e),
            WorkflowError::Growth(e) => match e {
                GrowthError::Numerics(n) => numerics_class(n),
                GrowthError::NonFiniteLoss | GrowthError::NoContrast => Numeric,
                GrowthError::Config(_) | GrowthError::EmptyLayer => Config,
                GrowthError::ShapeMismatch { .. } | GrowthError::Csv(_) | GrowthError::Io(_) => Data,
            },
            WorkflowError::Model(e) => match e {
                ModelError::Numerics(n) => numerics_class(n),
                ModelError::NonFiniteLoss { .. } => Numeric,
                ModelError::Data(_) | ModelError::Format(_) => Data,
                _ => Config,
            },
            WorkflowError::Metrics(e) => match e {
                MetricsError::NonFinite(_) => Numeric,
                _ => Data,
            },
        }
    }
}

type Result<T> = std::result::Result<T, WorkflowError>;

/// A seeded uniform sample of `n` items (all of them, shuffled, if fewer).
pub fn sample(d: &Dataset, n: usize, seed: u64) -> Dataset {
    let perm = seeded_permutation(d.len(), seed);
    d.subset(&perm[..n.min(d.len())])
}

fn image_channels(d: &Dataset) -> Result<usize> {
    d.image_shape()
        .map(|s| s.2)
        .ok_or_else(|| WorkflowError::Config(format!("dataset {} is empty", d.name)))
}

/// Mean inactive ratio of `layer` over `images`.
pub fn mean_inactive_ratio(layer: &GrowableLayer, images: &[Tensor3]) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for x in images {
        total += inactive_ratio(&activation_map(layer, x)?);
    }
    Ok(total / images.len() as f64)
}

#[derive(Debug, Clone)]
pub struct GrowOutcome {
    pub layer: GrowableLayer,
    pub log: GrowthLog,
    pub file: LayerFile,
}

/// Grows `start` on `images` and wraps the result with its provenance.
pub fn grow_on(start: GrowableLayer, images: &[Tensor3], dataset: &str, growth: &GrowthConfig) -> Result<GrowOutcome> {
    let (layer, log) = grow(start, images, growth)?;
    let file = LayerFile::from_layer(
        &layer,
        Provenance {
            dataset: dataset.to_string(),
            n_images: images.len(),
            config_hash: config_hash(growth),
            growth_epochs: log.epoch_mean_h.len(),
        },
    );
    Ok(GrowOutcome { layer, log, file })
}

/// Grows a first layer from the seed kernel on a seeded sample of `train`.
pub fn grow_first_layer(train: &Dataset, cfg: &RunConfig) -> Result<GrowOutcome> {
    let gen = sample(train, cfg.data.images, cfg.data.sample_seed);
    let c = image_channels(train)?;
    let seed = init_seed_layer(cfg.kernel_size, c, cfg.growth.alpha)?;
    grow_on(seed, &gen.images, &train.name, &cfg.growth)
}

/// Sigmoid responses of `layer` followed by 2×2 max pooling: the input a
/// second conv layer sees inside model 1.
pub fn pooled_maps(layer: &GrowableLayer, images: &[Tensor3]) -> Result<Vec<Tensor3>> {
    images
        .iter()
        .map(|x| Ok(max_pool_2x2(&conv2d_valid(x, layer)?)?.output))
        .collect()
}

/// Grows a second layer on the pooled maps of a fixed first layer.
pub fn grow_second_layer(layer0: &GrowableLayer, train: &Dataset, cfg: &RunConfig) -> Result<GrowOutcome> {
    let gen = sample(train, cfg.data.images, cfg.data.sample_seed);
    let maps = pooled_maps(layer0, &gen.images)?;
    let seed = init_seed_layer(cfg.kernel_size, layer0.len(), cfg.growth.alpha)?;
    grow_on(seed, &maps, &format!("{}/layer0-maps", train.name), &cfg.growth)
}

pub fn load_layer(path: &Path) -> Result<GrowableLayer> {
    Ok(LayerFile::load(path)?.to_layer()?)
}

/// Realizes the configured model; substituted layers come from files.
pub fn build_configured(mc: &ModelConfig, input_shape: (usize, usize, usize), n_classes: usize) -> Result<ClassifierModel> {
    let mut substitutions = BTreeMap::new();
    for (i, path) in [(0, &mc.sub0), (1, &mc.sub1)] {
        if let Some(p) = path {
            substitutions.insert(i, load_layer(p)?);
        }
    }
    build_with(mc, input_shape, n_classes, substitutions, BTreeSet::new())
}

fn build_with(
    mc: &ModelConfig,
    input_shape: (usize, usize, usize),
    n_classes: usize,
    substitutions: BTreeMap<usize, GrowableLayer>,
    extra_freeze: BTreeSet<usize>,
) -> Result<ClassifierModel> {
    let opts = BuildOptions {
        conv_kernels: mc.conv_kernels.clone(),
        hidden: mc.hidden,
        conv_activation: mc.conv_activation,
        substitutions,
        freeze: mc.freeze.iter().copied().chain(extra_freeze).collect(),
        seed: mc.seed,
    };
    Ok(build_model(mc.topology, input_shape, n_classes, &opts)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub history: History,
    pub report: EvalReport,
}

/// Trains on a seeded `train_subset` sample of `train` and scores a seeded
/// `eval_subset` sample of `test`.
pub fn train_and_evaluate(
    model: ClassifierModel,
    train: &Dataset,
    test: &Dataset,
    tc: &TrainConfig,
    sample_seed: u64,
) -> Result<TrainOutcome> {
    let train = sample(train, tc.train_subset.unwrap_or(train.len()), sample_seed);
    let test = sample(test, tc.eval_subset.unwrap_or(test.len()), sample_seed);
    let (model, history) = train_supervised(model, &train, Some(&test), tc)?;
    let scores = predict_scores(&model, &test.images)?;
    let report = evaluate(&scores, &test.labels, tc.rng_seed)?;
    Ok(TrainOutcome { model, history, report })
}

pub fn evaluate_model(model: &ClassifierModel, test: &Dataset, seed: u64) -> Result<EvalReport> {
    let scores = predict_scores(model, &test.images)?;
    Ok(evaluate(&scores, &test.labels, seed)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferArm {
    pub expanded: bool,
    pub kernels: usize,
    /// Mean inactive ratio over the evaluation images.
    pub mean_h: f64,
    pub history: History,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub kernels_before: usize,
    pub kernels_after: usize,
    pub unexpanded: TransferArm,
    pub expanded: Option<TransferArm>,
    pub growth: Option<GrowthSummary>,
}

impl TransferOutcome {
    /// Expanded minus unexpanded accuracy, when both arms ran.
    pub fn accuracy_gap(&self) -> Option<f64> {
        self.expanded.as_ref().map(|e| e.report.accuracy - self.unexpanded.report.accuracy)
    }
}

/// Moves a grown first layer to a new dataset. The layer is frozen, the rest
/// of the model is freshly initialized and trained on the target. With
/// `cfg.expand`, the layer is also grown on a seeded sample of target images
/// and a second, otherwise identical arm is trained around the result.
pub fn transfer(
    source: &GrowableLayer,
    target_train: &Dataset,
    target_test: &Dataset,
    cfg: &RunConfig,
) -> Result<(TransferOutcome, Option<GrowOutcome>)> {
    let shape = target_train
        .image_shape()
        .ok_or_else(|| WorkflowError::Config("target dataset is empty".into()))?;
    let eval = sample(target_test, cfg.train.eval_subset.unwrap_or(target_test.len()), cfg.data.sample_seed);
    let arm = |layer: &GrowableLayer, expanded: bool| -> Result<TransferArm> {
        let model = build_with(
            &cfg.model,
            shape,
            target_train.n_classes,
            BTreeMap::from([(0, layer.clone())]),
            BTreeSet::from([0]),
        )?;
        let out = train_and_evaluate(model, target_train, target_test, &cfg.train, cfg.data.sample_seed)?;
        Ok(TransferArm {
            expanded,
            kernels: layer.len(),
            mean_h: mean_inactive_ratio(layer, &eval.images)?,
            history: out.history,
            report: out.report,
        })
    };

    let unexpanded = arm(source, false)?;
    let (expanded, grown) = if cfg.expand {
        let growth = GrowthConfig {
            alpha: source.alpha(),
            ..cfg.growth.clone()
        };
        let gen = sample(target_train, cfg.data.images, cfg.data.sample_seed);
        let g = grow_on(source.clone(), &gen.images, &target_train.name, &growth)?;
        (Some(arm(&g.layer, true)?), Some(g))
    } else {
        (None, None)
    };
    Ok((
        TransferOutcome {
            kernels_before: source.len(),
            kernels_after: grown.as_ref().map_or(source.len(), |g| g.layer.len()),
            unexpanded,
            expanded,
            growth: grown.as_ref().map(|g| g.log.summary()),
        },
        grown,
    ))
}

pub struct Rendering {
    pub activity_pgm: Vec<u8>,
    pub dominant_ppm: Vec<u8>,
    pub source: Vec<u8>,
    /// "pgm" or "ppm", matching `source`.
    pub source_ext: &'static str,
}

pub fn render(layer: &GrowableLayer, image: &Tensor3) -> Result<Rendering> {
    let map = activation_map(layer, image)?;
    Ok(Rendering {
        activity_pgm: viz::activity_pgm(&map),
        dominant_ppm: viz::dominant_kernel_ppm(&map),
        source: viz::image_pnm(image),
        source_ext: if image.channels() == 3 { "ppm" } else { "pgm" },
    })
}
