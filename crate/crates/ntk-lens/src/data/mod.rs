//! Dataset handling: container type, class filtering, noisy-replacement
//! augmentation, subsampling, and a bit-exact on-disk format.
//!
//! Inputs are stored as a `d × input_dim` matrix with pixel-like values in
//! `[0, 1]`; labels are one-hot rows. The noisy-replacement operation adds
//! unclamped Gaussian noise (σ defaults to 0.01), so augmented inputs may
//! exceed the unit interval by a few σ — clamping would bias the noise
//! distribution, so it is deliberately not done.

pub mod cifar;
pub mod idx;
pub mod synthetic;

pub use cifar::{load_cifar_binary, CIFAR10_CLASS_NAMES};
pub use idx::load_idx;
pub use synthetic::{make_synthetic, SyntheticTaskSpec};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::path::Path;

/// A labeled dataset: inputs, one-hot labels, and class bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `d × input_dim` inputs.
    pub inputs: Matrix,
    /// `d × n` one-hot labels.
    pub labels: Matrix,
    /// Human-readable dataset name.
    pub name: String,
    /// Class names, indexed by label column.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    /// True when the dataset holds no samples.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input dimensionality.
    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Number of classes (label width).
    pub fn n_classes(&self) -> usize {
        self.labels.cols()
    }

    /// Class index of sample `i` (position of the 1 in its label row).
    pub fn label_index(&self, i: usize) -> usize {
        let row = self.labels.row(i);
        row.iter()
            .position(|&v| v == 1.0)
            .expect("label rows are one-hot")
    }

    /// Check structural invariants: matching row counts, class-name count
    /// equal to label width, and exactly one 1 (rest 0) per label row.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() != self.labels.rows() {
            return Err(Error::CountMismatch {
                images: self.inputs.rows(),
                labels: self.labels.rows(),
            });
        }
        if self.class_names.len() != self.labels.cols() {
            return Err(Error::InvalidArgument {
                op: "Dataset::validate",
                reason: format!(
                    "{} class names for label width {}",
                    self.class_names.len(),
                    self.labels.cols()
                ),
            });
        }
        for i in 0..self.labels.rows() {
            let row = self.labels.row(i);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidArgument {
                    op: "Dataset::validate",
                    reason: format!("label row {i} is not one-hot"),
                });
            }
        }
        Ok(())
    }

    /// Serialize to a compact binary file that round-trips bit-exactly.
    ///
    /// # Errors
    /// Fails on I/O errors.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&DATASET_MAGIC.to_be_bytes());
        write_string(&mut buf, &self.name);
        buf.extend_from_slice(&(self.class_names.len() as u32).to_le_bytes());
        for name in &self.class_names {
            write_string(&mut buf, name);
        }
        buf.extend_from_slice(&(self.inputs.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.inputs.cols() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.labels.cols() as u32).to_le_bytes());
        for &v in self.inputs.data() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for i in 0..self.labels.rows() {
            buf.extend_from_slice(&(self.label_index(i) as u32).to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    /// Load a dataset previously written by [`Dataset::save`].
    ///
    /// # Errors
    /// Fails on I/O errors, a wrong magic number, or truncated content.
    pub fn load(path: &Path) -> Result<Dataset> {
        let buf = fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let mut reader = ByteReader::new(&buf, path);
        let magic = u32::from_be_bytes(reader.take::<4>()?);
        if magic != DATASET_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: DATASET_MAGIC,
                found: magic,
            });
        }
        let name = reader.read_string()?;
        let n_classes_listed = reader.read_u32_le()? as usize;
        let mut class_names = Vec::with_capacity(n_classes_listed);
        for _ in 0..n_classes_listed {
            class_names.push(reader.read_string()?);
        }
        let rows = reader.read_u32_le()? as usize;
        let cols = reader.read_u32_le()? as usize;
        let label_width = reader.read_u32_le()? as usize;
        let mut inputs = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            inputs.push(f64::from_bits(u64::from_le_bytes(reader.take::<8>()?)));
        }
        let mut labels = Matrix::zeros(rows, label_width);
        for i in 0..rows {
            let idx = reader.read_u32_le()? as usize;
            if idx >= label_width {
                return Err(Error::LabelOutOfRange {
                    value: idx.min(u8::MAX as usize) as u8,
                    classes: label_width,
                });
            }
            labels.set(i, idx, 1.0);
        }
        Ok(Dataset {
            inputs: Matrix::from_flat(rows, cols, inputs)?,
            labels,
            name,
            class_names,
        })
    }
}

const DATASET_MAGIC: u32 = 0x4E54_4B44; // "NTKD"

fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Cursor over a byte buffer with truncation-aware reads.
struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        ByteReader { buf, pos: 0, path }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "needed {N} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn read_u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    fn read_string(&mut self) -> Result<String> {
        let len = self.read_u32_le()? as usize;
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!("string of {len} bytes at offset {} overruns file", self.pos),
            });
        }
        let s = String::from_utf8_lossy(&self.buf[self.pos..end]).into_owned();
        self.pos = end;
        Ok(s)
    }
}

/// Keep only the named classes, re-one-hotting labels over the kept classes
/// in the given order. Row order is preserved.
///
/// # Errors
/// Fails when `keep` is empty or names a class the dataset does not have.
pub fn filter_classes(ds: &Dataset, keep: &[String]) -> Result<Dataset> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument {
            op: "filter_classes",
            reason: "no classes to keep".to_string(),
        });
    }
    let mut kept_indices = Vec::with_capacity(keep.len());
    for name in keep {
        match ds.class_names.iter().position(|c| c == name) {
            Some(idx) => kept_indices.push(idx),
            None => {
                return Err(Error::UnknownClass {
                    name: name.clone(),
                    available: ds.class_names.clone(),
                })
            }
        }
    }
    // Old class index → new label column.
    let mut remap = vec![None; ds.n_classes()];
    for (new, &old) in kept_indices.iter().enumerate() {
        remap[old] = Some(new);
    }
    let mut rows = Vec::new();
    let mut new_labels = Vec::new();
    for i in 0..ds.len() {
        if let Some(new) = remap[ds.label_index(i)] {
            rows.push(ds.inputs.row(i).to_vec());
            new_labels.push(new);
        }
    }
    let inputs = Matrix::from_rows(&rows)?;
    let mut labels = Matrix::zeros(new_labels.len(), keep.len());
    for (i, &c) in new_labels.iter().enumerate() {
        labels.set(i, c, 1.0);
    }
    Ok(Dataset {
        inputs,
        labels,
        name: ds.name.clone(),
        class_names: keep.to_vec(),
    })
}

/// Replace a fraction of each class with noisy copies of the kept samples.
///
/// Per class, `round(keep_fraction · class_size)` randomly chosen samples
/// are kept; every other sample of the class is overwritten by a noisy copy
/// of a kept one (`+ N(0, σ²)` per pixel, unclamped). Replacement sources
/// are distributed as evenly as possible: each kept sample serves as source
/// `⌊m/n⌋` or `⌈m/n⌉` times. Dataset size, class balance, and row order are
/// all unchanged.
///
/// # Errors
/// Fails when `keep_fraction` is outside `(0, 1]`, `sigma` is negative, or
/// rounding leaves a class with zero kept samples.
pub fn noisy_replacement(ds: &Dataset, keep_fraction: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument {
            op: "noisy_replacement",
            reason: format!("keep_fraction must be in (0, 1], got {keep_fraction}"),
        });
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument {
            op: "noisy_replacement",
            reason: format!("sigma must be nonnegative, got {sigma}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|_| Error::InvalidArgument {
        op: "noisy_replacement",
        reason: format!("invalid noise width {sigma}"),
    })?;
    let mut result = ds.clone();
    for class in 0..ds.n_classes() {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.label_index(i) == class).collect();
        if members.is_empty() {
            continue;
        }
        let n_keep = (keep_fraction * members.len() as f64).round() as usize;
        if n_keep == 0 {
            return Err(Error::InvalidArgument {
                op: "noisy_replacement",
                reason: format!(
                    "keep_fraction {keep_fraction} keeps zero of {} samples in class '{}'",
                    members.len(),
                    ds.class_names[class]
                ),
            });
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let kept = &shuffled[..n_keep];
        let mut replaced: Vec<usize> = shuffled[n_keep..].to_vec();
        replaced.sort_unstable();
        let m = replaced.len();
        // Even source assignment: the first m % n kept samples serve one
        // extra time.
        let mut sources = Vec::with_capacity(m);
        for (rank, &src) in kept.iter().enumerate() {
            let uses = m / n_keep + usize::from(rank < m % n_keep);
            sources.extend(std::iter::repeat(src).take(uses));
        }
        debug_assert_eq!(sources.len(), m);
        for (&target, &source) in replaced.iter().zip(&sources) {
            let source_row = ds.inputs.row(source).to_vec();
            let target_row = result.inputs.row_mut(target);
            for (t, s) in target_row.iter_mut().zip(&source_row) {
                *t = s + noise.sample(&mut rng);
            }
        }
    }
    Ok(result)
}

/// Uniform subsample without replacement, deterministic per seed. The
/// returned rows are a random permutation of the chosen subset.
///
/// # Errors
/// Fails when `count` exceeds the dataset size or is zero.
pub fn subsample(ds: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 || count > ds.len() {
        return Err(Error::InvalidArgument {
            op: "subsample",
            reason: format!("cannot draw {count} samples from {}", ds.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(count);
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| ds.inputs.row(i).to_vec()).collect();
    let mut labels = Matrix::zeros(count, ds.n_classes());
    for (new, &old) in indices.iter().enumerate() {
        labels.set(new, ds.label_index(old), 1.0);
    }
    Ok(Dataset {
        inputs: Matrix::from_rows(&rows)?,
        labels,
        name: ds.name.clone(),
        class_names: ds.class_names.clone(),
    })
}
