use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::numerics::Tensor3;

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const PIXELS: usize = 3 * PLANE;

pub const CIFAR10_RECORD_LEN: usize = 1 + PIXELS;
pub const CIFAR100_RECORD_LEN: usize = 2 + PIXELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CifarVariant {
    Cifar10,
    /// CIFAR-100 with the fine (100-class) label; the coarse byte is ignored.
    Cifar100Fine,
}

impl CifarVariant {
    pub fn record_len(self) -> usize {
        match self {
            CifarVariant::Cifar10 => CIFAR10_RECORD_LEN,
            CifarVariant::Cifar100Fine => CIFAR100_RECORD_LEN,
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100Fine => 100,
        }
    }

    fn label_bytes(self) -> usize {
        self.record_len() - PIXELS
    }

    fn name(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "cifar10",
            CifarVariant::Cifar100Fine => "cifar100",
        }
    }
}

/// Reads one or more CIFAR binary batch files. Planar R, G, B bytes are
/// interleaved into 32×32×3 tensors scaled by 1/255.
pub fn load_cifar<P: AsRef<Path>>(paths: &[P], variant: CifarVariant) -> Result<Dataset, DataError> {
    let rec = variant.record_len();
    let skip = variant.label_bytes();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if bytes.len() % rec != 0 {
            return Err(DataError::RecordSize {
                path: path.to_path_buf(),
                len: bytes.len(),
                record: rec,
            });
        }
        for record in bytes.chunks_exact(rec) {
            // The last label byte is the class (the fine label for CIFAR-100).
            labels.push(record[skip - 1] as usize);
            let planes = &record[skip..];
            let mut data = vec![0.0; PIXELS];
            for p in 0..PLANE {
                for c in 0..3 {
                    data[p * 3 + c] = f64::from(planes[c * PLANE + p]) / 255.0;
                }
            }
            images.push(Tensor3::from_vec(SIDE, SIDE, 3, data).map_err(|e| DataError::Invalid(e.to_string()))?);
        }
    }
    Dataset::new(variant.name(), images, labels, variant.n_classes())
}

/// Writes records in the CIFAR binary layout. `pixels` holds 3072 planar bytes
/// per record; for CIFAR-100, `coarse` supplies the (ignored on load) coarse label.
pub fn write_cifar(
    path: impl AsRef<Path>,
    variant: CifarVariant,
    labels: &[u8],
    coarse: Option<&[u8]>,
    pixels: &[u8],
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), labels.len() * PIXELS, "pixel buffer size");
    let mut out = Vec::with_capacity(labels.len() * variant.record_len());
    for (i, &label) in labels.iter().enumerate() {
        if variant == CifarVariant::Cifar100Fine {
            out.push(coarse.map_or(0, |c| c[i]));
        }
        out.push(label);
        out.extend_from_slice(&pixels[i * PIXELS..(i + 1) * PIXELS]);
    }
    fs::write(path, out)
}
