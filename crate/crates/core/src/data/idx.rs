use std::fs;
use std::path::Path;

use super::{DataError, Dataset};
use crate::numerics::Tensor3;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

const MNIST_CLASSES: usize = 10;

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DataError::WrongMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<(), DataError> {
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Loads an uncompressed IDX image/label pair (MNIST, Fashion-MNIST).
/// Pixels are scaled by 1/255; images are H×W×1.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read(ip)?;
    let lb = read(lp)?;

    check_magic(&ib, IDX_IMAGE_MAGIC, ip)?;
    let n_images = be_u32(&ib, 4, ip)? as usize;
    let rows = be_u32(&ib, 8, ip)? as usize;
    let cols = be_u32(&ib, 12, ip)? as usize;
    let pixels = rows * cols;
    check_len(&ib, 16 + n_images * pixels, ip)?;

    check_magic(&lb, IDX_LABEL_MAGIC, lp)?;
    let n_labels = be_u32(&lb, 4, lp)? as usize;
    check_len(&lb, 8 + n_labels, lp)?;

    if n_images != n_labels {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let images = ib[16..16 + n_images * pixels]
        .chunks_exact(pixels)
        .map(|px| Tensor3::from_vec(rows, cols, 1, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let labels: Vec<usize> = lb[8..8 + n_labels].iter().map(|&b| b as usize).collect();
    let name = ip
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, images, labels, MNIST_CLASSES)
}

/// Writes raw bytes as an IDX image/label pair.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), rows * cols * labels.len(), "pixel buffer size");
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGE_MAGIC, labels.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    fs::write(images_path, img)?;
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    fs::write(labels_path, lab)
}
