//! Loader for the IDX image/label format (the MNIST container layout):
//! big-endian headers, one byte per pixel or label.
//!
//! Image files carry magic `0x00000803` followed by count, rows, and cols;
//! label files carry magic `0x00000801` followed by count. Pixels are
//! normalized to `[0, 1]` by dividing by 255, and labels become one-hot
//! rows of width `max_label + 1`.

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fs;
use std::path::Path;

/// Magic number of an IDX file holding a rank-3 tensor of unsigned bytes.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of an IDX file holding a rank-1 tensor of unsigned bytes.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Load an image/label IDX file pair into a dataset.
///
/// # Errors
/// Fails on I/O errors, wrong magic numbers, truncated payloads, or an
/// image/label count mismatch.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_raw = fs::read(images_path).map_err(|e| Error::io(images_path.to_path_buf(), e))?;
    let labels_raw = fs::read(labels_path).map_err(|e| Error::io(labels_path.to_path_buf(), e))?;

    let magic = read_magic(&images_raw, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let mut header = header_words(&images_raw, 16, images_path)?;
    let image_count = read_u32_be(&mut header) as usize;
    let rows = read_u32_be(&mut header) as usize;
    let cols = read_u32_be(&mut header) as usize;
    let pixel_count = image_count * rows * cols;
    let pixels = &images_raw[16..];
    if pixels.len() != pixel_count {
        return Err(Error::Truncated {
            path: images_path.to_path_buf(),
            detail: format!(
                "header promises {image_count} images of {rows}x{cols} ({pixel_count} bytes), payload has {}",
                pixels.len()
            ),
        });
    }

    let label_magic = read_magic(&labels_raw, labels_path)?;
    if label_magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: label_magic,
        });
    }
    let mut label_header = header_words(&labels_raw, 8, labels_path)?;
    let label_count = read_u32_be(&mut label_header) as usize;
    let label_bytes = &labels_raw[8..];
    if label_bytes.len() != label_count {
        return Err(Error::Truncated {
            path: labels_path.to_path_buf(),
            detail: format!("header promises {label_count} labels, payload has {}", label_bytes.len()),
        });
    }
    if image_count != label_count {
        return Err(Error::CountMismatch {
            images: image_count,
            labels: label_count,
        });
    }

    let inputs = Matrix::from_flat(
        image_count,
        rows * cols,
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let n_classes = label_bytes.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut labels = Matrix::zeros(label_count, n_classes);
    for (i, &b) in label_bytes.iter().enumerate() {
        labels.set(i, b as usize, 1.0);
    }
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    Ok(Dataset {
        inputs,
        labels,
        name,
        class_names: (0..n_classes).map(|c| c.to_string()).collect(),
    })
}

/// Read the leading magic number; the magic is checked before the rest of
/// the header so that a wrong file kind is reported as such even when the
/// file is also too short for the expected header.
fn read_magic(raw: &[u8], path: &Path) -> Result<u32> {
    if raw.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("file of {} bytes has no magic number", raw.len()),
        });
    }
    Ok(u32::from_be_bytes(raw[..4].try_into().expect("4-byte slice")))
}

/// Return the header words after the magic, checking the file is at least
/// `header_len` bytes long.
fn header_words<'a>(raw: &'a [u8], header_len: usize, path: &Path) -> Result<&'a [u8]> {
    if raw.len() < header_len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("file of {} bytes is shorter than the {header_len}-byte header", raw.len()),
        });
    }
    Ok(&raw[4..header_len])
}

fn read_u32_be(buf: &mut &[u8]) -> u32 {
    let value = u32::from_be_bytes(buf[..4].try_into().expect("4-byte slice"));
    *buf = &buf[4..];
    value
}
