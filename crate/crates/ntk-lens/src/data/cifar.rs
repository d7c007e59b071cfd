//! Loader for CIFAR-10 binary batches: 3073-byte records holding one label
//! byte followed by 3072 pixel bytes (three 32×32 channel planes).
//!
//! Pixels are normalized to `[0, 1]`; labels become one-hot rows of width
//! ten with the standard class names.

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fs;
use std::path::Path;

/// Bytes per record: one label byte plus 32·32·3 pixels.
pub const CIFAR_RECORD_LEN: usize = 3073;

/// The ten CIFAR-10 class names, indexed by label byte.
pub const CIFAR10_CLASS_NAMES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Load one or more CIFAR-10 binary batch files into a single dataset,
/// concatenated in the order given.
///
/// # Errors
/// Fails on I/O errors, a file length that is not a whole number of
/// 3073-byte records, or a label byte outside `0..=9`.
pub fn load_cifar_binary(batch_paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::InvalidArgument {
            op: "load_cifar_binary",
            reason: "no batch files given".to_string(),
        });
    }
    let mut pixels: Vec<f64> = Vec::new();
    let mut label_indices: Vec<usize> = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let raw = fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        if raw.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::RecordMisaligned {
                path: path.to_path_buf(),
                len: raw.len() as u64,
                record: raw.len() / CIFAR_RECORD_LEN,
            });
        }
        for record in raw.chunks_exact(CIFAR_RECORD_LEN) {
            let label = record[0];
            if label as usize >= CIFAR10_CLASS_NAMES.len() {
                return Err(Error::LabelOutOfRange {
                    value: label,
                    classes: CIFAR10_CLASS_NAMES.len(),
                });
            }
            label_indices.push(label as usize);
            pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let count = label_indices.len();
    let inputs = Matrix::from_flat(count, CIFAR_RECORD_LEN - 1, pixels)?;
    let mut labels = Matrix::zeros(count, CIFAR10_CLASS_NAMES.len());
    for (i, &c) in label_indices.iter().enumerate() {
        labels.set(i, c, 1.0);
    }
    Ok(Dataset {
        inputs,
        labels,
        name: "cifar10".to_string(),
        class_names: CIFAR10_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}
