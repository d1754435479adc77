//! Dataset ingestion (IDX for MNIST-style sets, CIFAR binary batches),
//! seeded splitting and batch iteration.

mod cifar;
mod idx;

pub use cifar::{load_cifar, write_cifar, CifarVariant, CIFAR100_RECORD_LEN, CIFAR10_RECORD_LEN};
pub use idx::{load_idx, write_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::Tensor3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: wrong magic number {found:#010x}, expected {expected:#010x}")]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: length {len} is not a multiple of the {record} byte record size")]
    RecordSize {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("label {label} at index {index} is out of range for {n_classes} classes")]
    InvalidLabel {
        index: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("requested {requested} items but the dataset holds only {available}")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Labelled images with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub images: Vec<Tensor3>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Vec<Tensor3>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(DataError::InvalidLabel {
                index,
                label,
                n_classes,
            });
        }
        if let Some(first) = images.first() {
            if images.iter().any(|t| t.shape() != first.shape()) {
                return Err(DataError::Invalid("images differ in shape".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// (height, width, channels) of the images, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(Tensor3::shape)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// The first `n` items (or all, if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Seeded permutation of `0..n`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffles with `seed` and splits into the first `n_head` items and the rest.
pub fn split(dataset: &Dataset, n_head: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if n_head > dataset.len() {
        return Err(DataError::SplitTooLarge {
            requested: n_head,
            available: dataset.len(),
        });
    }
    let perm = seeded_permutation(dataset.len(), seed);
    Ok((dataset.subset(&perm[..n_head]), dataset.subset(&perm[n_head..])))
}

/// Yields index batches over `0..len`, reshuffled every epoch from one seeded stream.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    len: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::Invalid("batch size must be positive".into()));
        }
        Ok(Self {
            len,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Shuffles and returns the next epoch's batches; the last one may be short.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.clear();
        self.order.extend(0..self.len);
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}
