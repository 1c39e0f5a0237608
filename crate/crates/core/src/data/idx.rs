//! IDX image/label ingestion (the MNIST container format).
//!
//! Big-endian layout: a 4-byte magic (`0x00000803` for N x H x W images,
//! `0x00000801` for labels), one 4-byte extent per dimension, then raw bytes.
//! Pixels are scaled to `[0, 1]` and images flattened to `d = H * W`. Files
//! whose name ends in `.gz` are transparently decompressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DataError, Dataset, Split};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::IdxTruncated {
            path: path.display().to_string(),
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an images/labels IDX pair into a dataset with pixels in `[0, 1]`.
/// The class count is inferred as `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset, DataError> {
    let img_bytes = read_maybe_gz(images_path)?;
    let magic = be_u32(&img_bytes, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::IdxMagic {
            path: images_path.display().to_string(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let n = be_u32(&img_bytes, 4, images_path)? as usize;
    let h = be_u32(&img_bytes, 8, images_path)? as usize;
    let w = be_u32(&img_bytes, 12, images_path)? as usize;
    let pixel_count = n * h * w;
    if img_bytes.len() < 16 + pixel_count {
        return Err(DataError::IdxTruncated {
            path: images_path.display().to_string(),
            offset: 16,
            needed: pixel_count,
            available: img_bytes.len() - 16,
        });
    }

    let lbl_bytes = read_maybe_gz(labels_path)?;
    let magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::IdxMagic {
            path: labels_path.display().to_string(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let label_n = be_u32(&lbl_bytes, 4, labels_path)? as usize;
    if lbl_bytes.len() < 8 + label_n {
        return Err(DataError::IdxTruncated {
            path: labels_path.display().to_string(),
            offset: 8,
            needed: label_n,
            available: lbl_bytes.len() - 8,
        });
    }
    if label_n != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: label_n,
        });
    }

    let features: Vec<f64> = img_bytes[16..16 + pixel_count]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = lbl_bytes[8..8 + n].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(
        Tensor::matrix(n, h * w, features)?,
        labels,
        class_count,
        split,
    )
}
