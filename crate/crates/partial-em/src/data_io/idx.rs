//! IDX image/label file ingestion (the MNIST distribution format) and the
//! matching writers.
//!
//! Layout: a 4-byte big-endian magic (0x00000803 for image tensors,
//! 0x00000801 for label vectors), big-endian u32 dimensions, then raw bytes.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::TruncatedFile {
            path: path.display().to_string(),
            needed: end,
            had: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an image/label file pair. Pixels are scaled to [0,1] (divide by
/// 255); rows whose label is outside `keep_digits` are dropped (`None`
/// keeps everything, an empty set keeps nothing). Labels ride along as
/// ground truth. Trailing bytes beyond the declared counts are ignored.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    keep_digits: Option<&[u8]>,
) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;

    let img_magic = be_u32(&img_bytes, 0, images_path)?;
    if img_magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGES_MAGIC,
            got: img_magic,
        });
    }
    let n_images = be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = be_u32(&img_bytes, 12, images_path)? as usize;

    let lbl_magic = be_u32(&lbl_bytes, 0, labels_path)?;
    if lbl_magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABELS_MAGIC,
            got: lbl_magic,
        });
    }
    let n_labels = be_u32(&lbl_bytes, 4, labels_path)? as usize;

    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let d = rows * cols;
    let img_needed = 16 + n_images * d;
    if img_bytes.len() < img_needed {
        return Err(Error::TruncatedFile {
            path: images_path.display().to_string(),
            needed: img_needed,
            had: img_bytes.len(),
        });
    }
    let lbl_needed = 8 + n_labels;
    if lbl_bytes.len() < lbl_needed {
        return Err(Error::TruncatedFile {
            path: labels_path.display().to_string(),
            needed: lbl_needed,
            had: lbl_bytes.len(),
        });
    }

    let keep: Vec<usize> = (0..n_images)
        .filter(|&i| match keep_digits {
            None => true,
            Some(set) => set.contains(&lbl_bytes[8 + i]),
        })
        .collect();

    let mut points = Array2::<f64>::zeros((keep.len(), d));
    let mut labels = Vec::with_capacity(keep.len());
    for (out, &i) in keep.iter().enumerate() {
        let start = 16 + i * d;
        for (j, &b) in img_bytes[start..start + d].iter().enumerate() {
            points[[out, j]] = b as f64 / 255.0;
        }
        labels.push(lbl_bytes[8 + i] as i64);
    }
    Dataset::new(points, Some(labels))
}

/// Write an image tensor file. Values are expected in [0,1] and are mapped
/// back to bytes by `round(v·255)`, clamped to the byte range, so a loaded
/// file re-serializes to its exact original bytes.
pub fn save_idx_images(path: &Path, points: ArrayView2<'_, f64>, rows: u32, cols: u32) -> Result<()> {
    let d = (rows as usize) * (cols as usize);
    if points.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: points.ncols(),
        });
    }
    let n = points.nrows();
    let mut bytes = Vec::with_capacity(16 + n * d);
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&rows.to_be_bytes());
    bytes.extend_from_slice(&cols.to_be_bytes());
    for i in 0..n {
        for &v in points.row(i) {
            bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Write a label vector file. Labels must fit in a byte.
pub fn save_idx_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if !(0..=255).contains(&l) {
            return Err(Error::InvalidArgument(format!(
                "label {l} does not fit in a byte"
            )));
        }
        bytes.push(l as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}
