//! Experiment configuration: TOML schema, validation, and a stable content
//! hash used to key persisted records.
//!
//! A config file has six sections — `[dataset]`, `[model]`, `[optimizer]`,
//! `[sweep]`, `[ensemble]`, `[run]` — plus an optional `[output]` section
//! naming the record files. The sweep axis selects what the value list
//! means: hidden-layer width, training-set size, or per-class keep
//! fraction for the noisy-replacement protocol.

use crate::error::{Error, Result};
use crate::nn::{Activation, Init, Parametrization};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Top-level experiment description, deserialized from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Data source and preprocessing.
    pub dataset: DatasetConfig,
    /// Network template; a width sweep overrides every hidden width.
    pub model: ModelConfig,
    /// Optimizer choice and learning rate(s).
    pub optimizer: OptimizerConfig,
    /// Sweep axis and value list.
    pub sweep: SweepConfig,
    /// Ensemble size and master seed.
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    /// Epoch budget and instrumentation cadence.
    pub run: RunConfig,
    /// Output file names (relative to the chosen output directory).
    #[serde(default)]
    pub output: OutputConfig,
}

/// Where the data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Gaussian clusters around orthonormal means; needs no files.
    Synthetic,
    /// IDX image/label file pairs.
    Idx,
    /// CIFAR-10 binary batches (optionally filtered to a class subset).
    Cifar,
}

/// Dataset section. Kind-specific fields are optional at the schema level
/// and checked by [`ExperimentConfig::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Data source selector.
    pub kind: DatasetKind,
    /// Dataset root; overrides the `NTK_LENS_DATA_DIR` environment
    /// variable, which in turn overrides the current directory.
    pub data_dir: Option<PathBuf>,
    /// Synthetic: number of classes.
    pub n_classes: Option<usize>,
    /// Synthetic: input dimensionality.
    pub input_dim: Option<usize>,
    /// Synthetic: cluster width.
    pub cluster_std: Option<f64>,
    /// IDX: training images file, relative to the data root.
    pub train_images: Option<String>,
    /// IDX: training labels file.
    pub train_labels: Option<String>,
    /// IDX: test images file.
    pub test_images: Option<String>,
    /// IDX: test labels file.
    pub test_labels: Option<String>,
    /// CIFAR: training batch files.
    pub train_batches: Option<Vec<String>>,
    /// CIFAR: test batch files.
    pub test_batches: Option<Vec<String>>,
    /// Optional class filter (applied to train and test alike), in the
    /// order that becomes the label order.
    pub classes: Option<Vec<String>>,
    /// Training-set size (ignored when the sweep axis is `train_sizes`).
    pub train_size: Option<usize>,
    /// Test-pool size (file datasets are subsampled to this; synthetic
    /// test pools are generated at this size). Default 256.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Noise width for the noisy-replacement protocol.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

fn default_test_size() -> usize {
    256
}

fn default_noise_sigma() -> f64 {
    0.01
}

/// Model section: the architecture template shared by all sweep points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden-layer widths. Under a width sweep, the list fixes the depth
    /// and every entry is replaced by the sweep value.
    pub hidden_widths: Vec<usize>,
    /// Hidden-layer activation.
    pub activation: Activation,
    /// Weight layout and scaling convention.
    #[serde(default = "default_parametrization")]
    pub parametrization: Parametrization,
    /// Weight initialization scheme.
    #[serde(default = "default_init")]
    pub init: Init,
}

fn default_parametrization() -> Parametrization {
    Parametrization::Standard
}

fn default_init() -> Init {
    Init::LecunNormal
}

/// Optimizer selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Adam with the usual defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
    Adam,
    /// Full-batch gradient descent with momentum.
    Sgd,
}

/// Optimizer section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Which optimizer steps the parameters.
    pub name: OptimizerKind,
    /// Learning rate used for every sweep point unless `lr_per_point`
    /// overrides it.
    pub lr: f64,
    /// Momentum coefficient (SGD only; ignored by Adam).
    #[serde(default)]
    pub momentum: f64,
    /// Optional per-sweep-point learning rates; must match the sweep
    /// value list in length.
    pub lr_per_point: Option<Vec<f64>>,
}

/// What the sweep value list means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Hidden-layer width (every hidden layer set to the value).
    Widths,
    /// Training-set size.
    TrainSizes,
    /// Per-class keep fraction for noisy replacement.
    KeepFractions,
}

/// Sweep section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Swept quantity.
    pub axis: SweepAxis,
    /// Strictly increasing, nonempty value list. Width and size values
    /// must be positive integers.
    pub values: Vec<f64>,
}

/// Ensemble section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Members per sweep point.
    #[serde(default = "default_ensemble_count")]
    pub count: usize,
    /// Master seed from which every member/data/probe seed is derived.
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
}

fn default_ensemble_count() -> usize {
    20
}

fn default_master_seed() -> u64 {
    1
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            count: default_ensemble_count(),
            master_seed: default_master_seed(),
        }
    }
}

/// Run section: budget and instrumentation cadence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Full-batch training epochs.
    pub epochs: usize,
    /// Kernel snapshot cadence in epochs (a snapshot is always taken at
    /// epoch 0, and the minimum-test-loss kernel is computed post hoc).
    #[serde(default = "default_ntk_every")]
    pub ntk_every: usize,
    /// Held-out probe points on which kernels are evaluated.
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
}

fn default_ntk_every() -> usize {
    10
}

fn default_probe_size() -> usize {
    128
}

/// Output file names, relative to the output directory chosen at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON-lines record file.
    #[serde(default = "default_records_name")]
    pub records: String,
    /// Per-member summary CSV.
    #[serde(default = "default_summary_name")]
    pub summary: String,
}

fn default_records_name() -> String {
    "records.jsonl".to_string()
}

fn default_summary_name() -> String {
    "summary.csv".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            records: default_records_name(),
            summary: default_summary_name(),
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML config file.
    ///
    /// # Errors
    /// Fails on I/O errors, TOML syntax/schema problems (the message
    /// carries the parser's line context), or semantic validation.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Config {
            message: format!("{}: {e}", path.display()),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Check semantic invariants beyond what the schema enforces.
    ///
    /// # Errors
    /// Returns a config error describing the first violated rule.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Config { message });
        if self.sweep.values.is_empty() {
            return fail("sweep.values must be nonempty".to_string());
        }
        if !self.sweep.values.windows(2).all(|w| w[0] < w[1]) {
            return fail("sweep.values must be strictly increasing".to_string());
        }
        match self.sweep.axis {
            SweepAxis::Widths | SweepAxis::TrainSizes => {
                for &v in &self.sweep.values {
                    if !(v > 0.0 && v.fract() == 0.0) {
                        return fail(format!(
                            "sweep value {v} must be a positive integer for this axis"
                        ));
                    }
                }
            }
            SweepAxis::KeepFractions => {
                for &v in &self.sweep.values {
                    if !(v > 0.0 && v <= 1.0) {
                        return fail(format!("keep fraction {v} must lie in (0, 1]"));
                    }
                }
            }
        }
        if self.run.epochs < 1 {
            return fail("run.epochs must be at least 1".to_string());
        }
        if self.run.ntk_every < 1 {
            return fail("run.ntk_every must be at least 1".to_string());
        }
        if self.run.probe_size < 1 {
            return fail("run.probe_size must be at least 1".to_string());
        }
        if self.ensemble.count < 1 {
            return fail("ensemble.count must be at least 1".to_string());
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return fail(format!("optimizer.lr must be positive, got {}", self.optimizer.lr));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return fail(format!(
                "optimizer.momentum must lie in [0, 1), got {}",
                self.optimizer.momentum
            ));
        }
        if let Some(per_point) = &self.optimizer.lr_per_point {
            if per_point.len() != self.sweep.values.len() {
                return fail(format!(
                    "optimizer.lr_per_point has {} entries for {} sweep values",
                    per_point.len(),
                    self.sweep.values.len()
                ));
            }
            if !per_point.iter().all(|&lr| lr > 0.0 && lr.is_finite()) {
                return fail("optimizer.lr_per_point entries must be positive".to_string());
            }
        }
        if self.model.hidden_widths.is_empty() {
            return fail("model.hidden_widths must name at least one hidden layer".to_string());
        }
        if self.model.hidden_widths.iter().any(|&w| w == 0) {
            return fail("model.hidden_widths entries must be positive".to_string());
        }
        match self.dataset.kind {
            DatasetKind::Synthetic => {
                let n_classes = self
                    .dataset
                    .n_classes
                    .ok_or_else(|| Error::Config {
                        message: "synthetic dataset needs dataset.n_classes".to_string(),
                    })?;
                let input_dim = self.dataset.input_dim.ok_or_else(|| Error::Config {
                    message: "synthetic dataset needs dataset.input_dim".to_string(),
                })?;
                if n_classes < 2 {
                    return fail("dataset.n_classes must be at least 2".to_string());
                }
                if input_dim < n_classes {
                    return fail(format!(
                        "dataset.input_dim {input_dim} cannot host {n_classes} orthogonal class means"
                    ));
                }
                if self.dataset.cluster_std.is_none() {
                    return fail("synthetic dataset needs dataset.cluster_std".to_string());
                }
            }
            DatasetKind::Idx => {
                for (field, value) in [
                    ("train_images", &self.dataset.train_images),
                    ("train_labels", &self.dataset.train_labels),
                    ("test_images", &self.dataset.test_images),
                    ("test_labels", &self.dataset.test_labels),
                ] {
                    if value.is_none() {
                        return fail(format!("idx dataset needs dataset.{field}"));
                    }
                }
            }
            DatasetKind::Cifar => {
                if self.dataset.train_batches.as_ref().is_none_or(Vec::is_empty) {
                    return fail("cifar dataset needs nonempty dataset.train_batches".to_string());
                }
                if self.dataset.test_batches.as_ref().is_none_or(Vec::is_empty) {
                    return fail("cifar dataset needs nonempty dataset.test_batches".to_string());
                }
            }
        }
        if self.sweep.axis == SweepAxis::TrainSizes {
            if self.dataset.train_size.is_some() {
                return fail(
                    "dataset.train_size conflicts with a train_sizes sweep (the sweep sets it)"
                        .to_string(),
                );
            }
        } else if self.dataset.train_size.is_none() {
            return fail("dataset.train_size is required unless sweeping train_sizes".to_string());
        }
        if !(self.dataset.noise_sigma >= 0.0) {
            return fail(format!(
                "dataset.noise_sigma must be nonnegative, got {}",
                self.dataset.noise_sigma
            ));
        }
        if self.dataset.test_size < 1 {
            return fail("dataset.test_size must be at least 1".to_string());
        }
        Ok(())
    }

    /// Stable content hash of the config (hex SHA-256 of its canonical
    /// JSON form). Identical configs hash identically across runs and
    /// processes; any semantic change changes the hash.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to String cannot fail");
        }
        hex
    }

    /// Learning rate for the sweep point at `sweep_index`.
    pub fn lr_for_point(&self, sweep_index: usize) -> f64 {
        self.optimizer
            .lr_per_point
            .as_ref()
            .map_or(self.optimizer.lr, |per_point| per_point[sweep_index])
    }
}
