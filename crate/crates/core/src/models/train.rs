use serde::{Deserialize, Serialize};

use super::backprop::argmax_first;
use super::{ClassifierModel, Gradients, ModelError};
use crate::data::{BatchIterator, Dataset};
use crate::numerics::{softmax, softmax_cross_entropy, Sgd, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub rng_seed: u64,
    /// Use only the first n training samples.
    pub train_subset: Option<usize>,
    /// Use only the first n evaluation samples.
    pub eval_subset: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            lr: 0.01,
            momentum: 0.9,
            rng_seed: 0,
            train_subset: None,
            eval_subset: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Invalid(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.train_subset == Some(0) || self.eval_subset == Some(0) {
            return bad("subset sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running mean over the epoch's minibatches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Frozen leading layers never change, so their outputs are computed once.
struct Features {
    start: usize,
    shape: (usize, usize, usize),
    rows: Vec<Vec<f64>>,
}

impl Features {
    fn new(model: &ClassifierModel, images: &[Tensor3], start: usize) -> Result<Self, ModelError> {
        let mut shape = model.input_shape;
        let mut rows = Vec::with_capacity(images.len());
        for x in images {
            let (row, s) = model.prefix_features(x, start)?;
            shape = s;
            rows.push(row);
        }
        Ok(Self { start, shape, rows })
    }

    fn evaluate(&self, model: &ClassifierModel, labels: &[usize]) -> Result<(f64, f64), ModelError> {
        let mut loss = 0.0;
        let mut correct = 0;
        for (row, &y) in self.rows.iter().zip(labels) {
            let trace = model.forward_from(self.start, row.clone(), self.shape);
            let (l, probs) = softmax_cross_entropy(trace.logits(), y)?;
            loss += l;
            correct += usize::from(argmax_first(&probs) == y);
        }
        let n = labels.len().max(1) as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

fn check_dataset(model: &ClassifierModel, d: &Dataset) -> Result<(), ModelError> {
    if d.n_classes != model.n_classes {
        return Err(ModelError::ClassMismatch {
            dataset: d.n_classes,
            model: model.n_classes,
        });
    }
    if let Some(shape) = d.image_shape() {
        if shape != model.input_shape {
            return Err(ModelError::InputShape {
                expected: model.input_shape,
                actual: shape,
            });
        }
    }
    Ok(())
}

/// Minibatch SGD with momentum on mean softmax cross-entropy. Frozen layers
/// are never written. When `test` is given, it is scored after each epoch.
pub fn train_supervised(
    mut model: ClassifierModel,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(ClassifierModel, History), ModelError> {
    config.validate()?;
    check_dataset(&model, train)?;
    if let Some(t) = test {
        check_dataset(&model, t)?;
    }
    let train = config.train_subset.map_or_else(|| train.clone(), |n| train.head(n));
    let test = test.map(|t| config.eval_subset.map_or_else(|| t.clone(), |n| t.head(n)));
    if train.is_empty() {
        return Err(ModelError::Invalid("training set is empty".into()));
    }

    let mut history = History::default();
    if config.epochs == 0 {
        return Ok((model, history));
    }
    let start = model.lowest_trainable().unwrap_or(model.layers.len());
    let train_feats = Features::new(&model, &train.images, start)?;
    let test_feats = test.as_ref().map(|t| Features::new(&model, &t.images, start)).transpose()?;

    let mut sgd = Sgd::new(config.lr, config.momentum)?;
    let mut batches = BatchIterator::new(train.len(), config.batch_size, config.rng_seed)?;
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in batches.next_epoch().into_iter().enumerate() {
            let mut grads = Gradients::zeros(&model);
            let mut batch_loss = 0.0;
            for &i in &batch {
                let (l, pred) = model.accumulate_gradients_from(
                    start,
                    train_feats.rows[i].clone(),
                    train_feats.shape,
                    train.labels[i],
                    &mut grads,
                )?;
                batch_loss += l;
                correct += usize::from(pred == train.labels[i]);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr: config.lr,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for (i, (slot, g)) in model.layers.iter_mut().zip(&grads.blocks).enumerate() {
                let (Some(g), false) = (g, slot.frozen) else { continue };
                let Some((w, bias)) = slot.layer.params_mut() else { continue };
                let gw: Vec<f64> = g.weights.iter().map(|v| v * scale).collect();
                let gb: Vec<f64> = g.bias.iter().map(|v| v * scale).collect();
                sgd.step(&format!("L{i}.w"), w, &gw)?;
                sgd.step(&format!("L{i}.b"), bias, &gb)?;
            }
        }
        let n = train.len() as f64;
        let (test_loss, test_accuracy) = match (&test_feats, &test) {
            (Some(f), Some(t)) => {
                let (l, a) = f.evaluate(&model, &t.labels)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            test_loss,
            test_accuracy,
        });
    }
    Ok((model, history))
}

/// Class probabilities for each image.
pub fn predict_scores(model: &ClassifierModel, images: &[Tensor3]) -> Result<Vec<Vec<f64>>, ModelError> {
    images.iter().map(|x| Ok(softmax(&model.logits(x)?))).collect()
}
