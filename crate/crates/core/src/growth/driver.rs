use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    activation_map, collect_negatives, generalize_kernel, inactive_ratio, init_kernel_from_patch,
    ActivationMap, GrowthConfig, GrowthError,
};
use crate::numerics::{GrowableLayer, Tensor3};

/// One appended kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    /// Position of the kernel in the layer.
    pub kernel_index: usize,
    pub epoch: usize,
    pub image_id: usize,
    pub row: usize,
    pub col: usize,
    /// ⟨W, P_S⟩ + b right after initialization, before generalization.
    pub init_preactivation: f64,
    pub pre_boost_max_weight: f64,
    pub boost_iters: usize,
    pub boost_exhausted: bool,
    pub final_loss: f64,
    pub n_negatives: usize,
    pub positive_response: f64,
    pub mean_negative_response: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Running mean of H fell below the stop ratio.
    StopRatio,
    MaxKernels,
    EpochsExhausted,
    NoImages,
}

/// Everything the growth driver did, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthLog {
    pub records: Vec<KernelRecord>,
    /// Mean H over the images visited in each epoch.
    pub epoch_mean_h: Vec<f64>,
    /// Kernel count at the end of each epoch.
    pub epoch_kernel_counts: Vec<usize>,
    /// Running mean of H over the last stop window when growth ended.
    pub final_batch_mean_h: Option<f64>,
    pub stop_reason: StopReason,
    pub images_visited: usize,
    /// Inactive candidates passed over because they carry no contrast.
    pub skipped_patches: usize,
    /// Kernels abandoned because generalization diverged.
    pub failed_kernels: usize,
    pub initial_kernels: usize,
}

impl GrowthLog {
    pub fn kernels_added(&self) -> usize {
        self.records.len()
    }

    /// One row per kernel: epoch, image_id, row, col, boost_iters, final_loss, n_negatives.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GrowthError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "image_id",
            "row",
            "col",
            "boost_iters",
            "final_loss",
            "n_negatives",
        ])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.image_id.to_string(),
                r.row.to_string(),
                r.col.to_string(),
                r.boost_iters.to_string(),
                r.final_loss.to_string(),
                r.n_negatives.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> GrowthSummary {
        GrowthSummary {
            epoch_mean_h: self.epoch_mean_h.clone(),
            epoch_kernel_counts: self.epoch_kernel_counts.clone(),
            initial_kernels: self.initial_kernels,
            final_kernels: self.initial_kernels + self.records.len(),
            final_batch_mean_h: self.final_batch_mean_h,
            stop_reason: self.stop_reason,
            images_visited: self.images_visited,
            skipped_patches: self.skipped_patches,
            failed_kernels: self.failed_kernels,
        }
    }
}

/// JSON-facing digest of a [`GrowthLog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub epoch_mean_h: Vec<f64>,
    pub epoch_kernel_counts: Vec<usize>,
    pub initial_kernels: usize,
    pub final_kernels: usize,
    pub final_batch_mean_h: Option<f64>,
    pub stop_reason: StopReason,
    pub images_visited: usize,
    pub skipped_patches: usize,
    pub failed_kernels: usize,
}

/// Inactive positions ordered from strongest rejection (lowest max response)
/// to weakest, row-major among equals.
pub fn rejection_order(map: &ActivationMap) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..map.len()).filter(|&i| !map.active[i]).collect();
    idx.sort_by(|&a, &b| map.max_response[a].total_cmp(&map.max_response[b]).then(a.cmp(&b)));
    idx
}

/// Grows `layer` over the image stream until the running mean of the inactive
/// ratio drops below `stop_ratio`, the kernel cap is hit, or the epochs run out.
///
/// Each epoch visits the images in a fresh seeded order. Every visit measures H
/// against the current layer; images with H ≥ `stop_ratio` contribute one
/// kernel, built from the most strongly rejected patch that has contrast.
pub fn grow(
    mut layer: GrowableLayer,
    images: &[Tensor3],
    config: &GrowthConfig,
) -> Result<(GrowableLayer, GrowthLog), GrowthError> {
    config.validate()?;
    if layer.is_empty() {
        return Err(GrowthError::EmptyLayer);
    }
    if (layer.alpha() - config.alpha).abs() > 0.0 {
        return Err(GrowthError::Config(format!(
            "layer alpha {} differs from config alpha {}",
            layer.alpha(),
            config.alpha
        )));
    }
    let mut log = GrowthLog {
        records: Vec::new(),
        epoch_mean_h: Vec::new(),
        epoch_kernel_counts: Vec::new(),
        final_batch_mean_h: None,
        stop_reason: StopReason::EpochsExhausted,
        images_visited: 0,
        skipped_patches: 0,
        failed_kernels: 0,
        initial_kernels: layer.len(),
    };
    if images.is_empty() {
        log.stop_reason = StopReason::NoImages;
        return Ok((layer, log));
    }

    let window_len = config.stop_batch.min(images.len());
    let mut window: VecDeque<f64> = VecDeque::with_capacity(window_len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let k = layer.kernel_size();

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut h_sum = 0.0;
        let mut visited = 0usize;
        let mut stop = None;
        for &image_id in &order {
            let image = &images[image_id];
            let map = activation_map(&layer, image)?;
            let h = inactive_ratio(&map);
            h_sum += h;
            visited += 1;
            log.images_visited += 1;
            if window.len() == window_len {
                window.pop_front();
            }
            window.push_back(h);
            if window.len() == window_len && window_mean(&window) < config.stop_ratio {
                stop = Some(StopReason::StopRatio);
                break;
            }
            if layer.len() >= config.max_kernels {
                stop = Some(StopReason::MaxKernels);
                break;
            }
            if h < config.stop_ratio {
                continue;
            }
            for flat in rejection_order(&map) {
                let (row, col) = map.position(flat);
                let source = image.patch(row, col, k)?;
                let init = match init_kernel_from_patch(&source, config) {
                    Ok(init) => init,
                    Err(GrowthError::NoContrast) => {
                        log.skipped_patches += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let init_preactivation = init.kernel.preactivation(&source)?;
                let negatives = collect_negatives(&layer, image, &map, config.negatives_per_kernel)?;
                match generalize_kernel(init.kernel, &source, &negatives, config) {
                    Ok(g) => {
                        log.records.push(KernelRecord {
                            kernel_index: layer.len(),
                            epoch,
                            image_id,
                            row,
                            col,
                            init_preactivation,
                            pre_boost_max_weight: init.pre_boost_max_weight,
                            boost_iters: init.boost_iters,
                            boost_exhausted: init.boost_exhausted,
                            final_loss: g.final_loss,
                            n_negatives: negatives.len(),
                            positive_response: g.positive_response,
                            mean_negative_response: g.mean_negative_response,
                        });
                        layer.push(g.kernel)?;
                    }
                    Err(GrowthError::NonFiniteLoss) => log.failed_kernels += 1,
                    Err(e) => return Err(e),
                }
                break;
            }
        }
        if visited > 0 {
            log.epoch_mean_h.push(h_sum / visited as f64);
            log.epoch_kernel_counts.push(layer.len());
        }
        if let Some(reason) = stop {
            log.stop_reason = reason;
            break 'epochs;
        }
    }
    log.final_batch_mean_h = (!window.is_empty()).then(|| window_mean(&window));
    Ok((layer, log))
}

fn window_mean(w: &VecDeque<f64>) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}
