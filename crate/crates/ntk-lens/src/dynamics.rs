//! Time-series analytics over a training run: adaptation rate, trace ratio,
//! alignment metrics, and the record types that persist them.
//!
//! A note on the sign of the adaptation rate χ: it is stored exactly as
//! defined — the slope of the (smoothed) kernel trace with respect to the
//! (smoothed) log training loss. A kernel whose trace grows while the
//! training loss falls therefore has *negative* χ. Plots and "χ increases"
//! comparisons use |χ|, which is the magnitude displayed in reported
//! dynamics; code that consumes stored records must take the absolute value
//! itself.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

/// Smoothed loss differences below this are considered zero; the
/// corresponding adaptation-rate points are skipped (reported as `None`).
pub const ADAPTATION_LOSS_EPSILON: f64 = 1e-9;

/// Train/test loss at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// Kernel observables recorded at one instrumented epoch.
///
/// `trace` is taken on the raw kernel, `effective_rank` on the
/// normalized-gradient kernel, `label_alignment` on the raw kernel, and
/// `misalignment` compares this epoch's leading raw-kernel eigenspace with
/// the previous recorded one (0 for the first record).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtkObservation {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub trace: f64,
    pub effective_rank: f64,
    pub label_alignment: f64,
    pub misalignment: f64,
}

/// Scalar summary of the kernel pair measured at one special epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub epoch: usize,
    pub epoch_tag: String,
    /// Trace of the raw kernel.
    pub trace: f64,
    /// Effective rank of the raw kernel (diagnostic).
    pub effective_rank_raw: f64,
    /// Effective rank of the normalized-gradient kernel (the reported Γ).
    pub effective_rank: f64,
    /// Label alignment of the raw kernel.
    pub label_alignment: f64,
}

/// Everything recorded over one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrace {
    /// Losses at every epoch (epoch 0 holds the pre-training evaluation).
    pub losses: Vec<LossPoint>,
    /// Kernel observables at instrumented epochs.
    pub observations: Vec<NtkObservation>,
    /// Snapshot summary at initialization (epoch 0).
    pub init: SnapshotSummary,
    /// Snapshot summary at the minimum-test-loss parameters.
    pub min_test_loss: SnapshotSummary,
}

impl DynamicsTrace {
    /// Check the structural invariants: strictly increasing epochs in both
    /// series, the init snapshot at epoch 0, and consistent tags.
    pub fn validate(&self) -> Result<()> {
        for window in self.losses.windows(2) {
            if window[1].epoch <= window[0].epoch {
                return Err(Error::Records {
                    message: format!(
                        "loss epochs not strictly increasing ({} then {})",
                        window[0].epoch, window[1].epoch
                    ),
                });
            }
        }
        for window in self.observations.windows(2) {
            if window[1].epoch <= window[0].epoch {
                return Err(Error::Records {
                    message: format!(
                        "observation epochs not strictly increasing ({} then {})",
                        window[0].epoch, window[1].epoch
                    ),
                });
            }
        }
        if self.init.epoch != 0 || self.init.epoch_tag != "init" {
            return Err(Error::Records {
                message: format!(
                    "init snapshot must be tagged 'init' at epoch 0 (got '{}' at {})",
                    self.init.epoch_tag, self.init.epoch
                ),
            });
        }
        if self.min_test_loss.epoch_tag != "min_test_loss" {
            return Err(Error::Records {
                message: format!(
                    "min-test-loss snapshot has tag '{}'",
                    self.min_test_loss.epoch_tag
                ),
            });
        }
        Ok(())
    }

    /// Epoch of minimum test loss over the recorded losses.
    pub fn min_test_loss_epoch(&self) -> Result<usize> {
        locate_min_test_loss(&self.losses)
    }
}

/// The headline scalars of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyQuantities {
    /// Raw-kernel trace at initialization.
    pub trace_init: f64,
    /// Adaptation rate at the minimum-test-loss epoch (signed; see module
    /// docs). `None` when the run was too short to smooth.
    pub adaptation_rate_min: Option<f64>,
    /// Effective rank (normalized-gradient kernel) at minimum test loss.
    pub effective_rank_min: f64,
    /// Raw-kernel trace at minimum test loss.
    pub trace_min: f64,
    /// `(trace_min − trace_init) / trace_init`, stored exactly as computed.
    pub trace_ratio: f64,
}

/// Adaptation rate χ: the numerical derivative of the smoothed kernel trace
/// with respect to the smoothed log training loss.
///
/// Both series are first smoothed with a centered running mean of `window`
/// epochs (only indices where the full window fits get a smoothed value),
/// then differenced forward: `χ_t = ΔTr̄_t / Δlog L̄_t`. Entries are `None`
/// where smoothing is unavailable or where `|Δlog L̄| <` the epsilon (the
/// loss plateaued, so the quotient is meaningless).
///
/// # Errors
/// Fails when the series differ in length, are shorter than `2·window`, or
/// `window` is zero.
pub fn adaptation_rate(
    trace_series: &[f64],
    log_train_loss_series: &[f64],
    window: usize,
) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::InvalidArgument {
            op: "adaptation_rate",
            reason: "window must be at least 1".to_string(),
        });
    }
    if trace_series.len() != log_train_loss_series.len() {
        return Err(Error::InvalidArgument {
            op: "adaptation_rate",
            reason: format!(
                "series lengths differ ({} vs {})",
                trace_series.len(),
                log_train_loss_series.len()
            ),
        });
    }
    let len = trace_series.len();
    if len < 2 * window {
        return Err(Error::InvalidArgument {
            op: "adaptation_rate",
            reason: format!("series of length {len} is shorter than 2·window = {}", 2 * window),
        });
    }
    let smoothed_trace = centered_mean(trace_series, window);
    let smoothed_loss = centered_mean(log_train_loss_series, window);
    let mut chi = vec![None; len];
    for t in 0..len - 1 {
        if let (Some(tr0), Some(tr1), Some(l0), Some(l1)) = (
            smoothed_trace[t],
            smoothed_trace[t + 1],
            smoothed_loss[t],
            smoothed_loss[t + 1],
        ) {
            let dl = l1 - l0;
            if dl.abs() >= ADAPTATION_LOSS_EPSILON {
                chi[t] = Some((tr1 - tr0) / dl);
            }
        }
    }
    Ok(chi)
}

/// Centered running mean over `window` points; `None` where the window does
/// not fit entirely inside the series.
fn centered_mean(series: &[f64], window: usize) -> Vec<Option<f64>> {
    let len = series.len();
    let left = (window - 1) / 2;
    let right = window / 2;
    let mut out = vec![None; len];
    let inv = 1.0 / window as f64;
    for t in left..len.saturating_sub(right) {
        let mut acc = 0.0;
        for v in &series[t - left..=t + right] {
            acc += v;
        }
        out[t] = Some(acc * inv);
    }
    out
}

/// Relative kernel-trace growth `β = (trace_min − trace_init)/trace_init`.
///
/// A static kernel gives exactly 0.
///
/// # Errors
/// Fails when `trace_init` is not strictly positive.
pub fn trace_ratio(trace_init: f64, trace_min: f64) -> Result<f64> {
    if !(trace_init > 0.0) {
        return Err(Error::InvalidArgument {
            op: "trace_ratio",
            reason: format!("trace_init must be positive (got {trace_init})"),
        });
    }
    Ok((trace_min - trace_init) / trace_init)
}

/// Cosine similarity of two matrices under the Frobenius inner product.
///
/// # Errors
/// Fails on shape mismatch or when either matrix has zero norm.
pub fn alignment_cosine(a: &Matrix, b: &Matrix) -> Result<f64> {
    let inner = a.frobenius_inner(b)?;
    let norm_a = a.frobenius_norm();
    let norm_b = b.frobenius_norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::InvalidArgument {
            op: "alignment_cosine",
            reason: "zero-norm input".to_string(),
        });
    }
    Ok(inner / (norm_a * norm_b))
}

/// Alignment of a `(d·n)²` kernel with the label structure: the Frobenius
/// cosine between the kernel and the one-hot label Gram `Y Yᵀ` lifted to
/// kernel shape (entry `((i,k),(j,l)) = ⟨y_i, y_j⟩ · δ_kl`, matching the
/// sample-major index order).
///
/// The lifted Gram is never materialized: its block structure reduces the
/// inner product to a sum over the kernel's `(k == l)` sub-diagonals. For
/// PSD kernels the result lies in `[0, 1]`; it is clamped there to absorb
/// rounding.
///
/// # Errors
/// Fails when the kernel is not `(d·n)²` for the label shape `d × n`, or
/// when either factor has zero norm.
pub fn label_alignment(kernel: &Matrix, labels_onehot: &Matrix) -> Result<f64> {
    let d = labels_onehot.rows();
    let n = labels_onehot.cols();
    if kernel.rows() != d * n || kernel.cols() != d * n {
        return Err(Error::ShapeMismatch {
            op: "label_alignment",
            left_rows: kernel.rows(),
            left_cols: kernel.cols(),
            right_rows: d,
            right_cols: n,
        });
    }
    let label_gram = labels_onehot.gram();
    let mut inner = 0.0;
    let mut gram_sq = 0.0;
    for i in 0..d {
        for j in 0..d {
            let g = label_gram.get(i, j);
            gram_sq += g * g;
            if g == 0.0 {
                continue;
            }
            let mut block_diag = 0.0;
            for k in 0..n {
                block_diag += kernel.get(i * n + k, j * n + k);
            }
            inner += g * block_diag;
        }
    }
    // ‖lift‖_F² = n · ‖Y Yᵀ‖_F², each block contributing its value n times.
    let lift_norm = (gram_sq * n as f64).sqrt();
    let kernel_norm = kernel.frobenius_norm();
    if lift_norm == 0.0 || kernel_norm == 0.0 {
        return Err(Error::InvalidArgument {
            op: "label_alignment",
            reason: "zero-norm input".to_string(),
        });
    }
    Ok((inner / (lift_norm * kernel_norm)).clamp(0.0, 1.0))
}

/// Misalignment between two leading eigenspaces:
/// `1 − ⟨Q_k, Q′_k⟩_F / (‖Q_k‖_F ‖Q′_k‖_F)` over the first `k` columns.
///
/// Columns are compared exactly as given — the eigensolver's sign
/// convention already pins each eigenvector's orientation, and normalizing
/// signs here would hide genuine rotations. The result is clamped to
/// `[0, 1]`.
///
/// # Errors
/// Fails when shapes differ, `k` is zero, or `k` exceeds either column
/// count.
pub fn ntk_misalignment(q_before: &Matrix, q_after: &Matrix, k: usize) -> Result<f64> {
    if q_before.rows() != q_after.rows() {
        return Err(Error::ShapeMismatch {
            op: "ntk_misalignment",
            left_rows: q_before.rows(),
            left_cols: q_before.cols(),
            right_rows: q_after.rows(),
            right_cols: q_after.cols(),
        });
    }
    if k == 0 || k > q_before.cols() || k > q_after.cols() {
        return Err(Error::InvalidArgument {
            op: "ntk_misalignment",
            reason: format!(
                "k = {k} out of range for {} and {} columns",
                q_before.cols(),
                q_after.cols()
            ),
        });
    }
    let mut inner = 0.0;
    let mut norm_before = 0.0;
    let mut norm_after = 0.0;
    for r in 0..q_before.rows() {
        let row_b = q_before.row(r);
        let row_a = q_after.row(r);
        for c in 0..k {
            inner += row_b[c] * row_a[c];
            norm_before += row_b[c] * row_b[c];
            norm_after += row_a[c] * row_a[c];
        }
    }
    let denom = norm_before.sqrt() * norm_after.sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument {
            op: "ntk_misalignment",
            reason: "zero-norm eigenspace".to_string(),
        });
    }
    Ok((1.0 - inner / denom).clamp(0.0, 1.0))
}

/// Epoch of minimum test loss; ties resolve to the earliest epoch.
///
/// # Errors
/// Fails on an empty series.
pub fn locate_min_test_loss(losses: &[LossPoint]) -> Result<usize> {
    let mut best: Option<&LossPoint> = None;
    for point in losses {
        match best {
            Some(b) if point.test_loss >= b.test_loss => {}
            _ => best = Some(point),
        }
    }
    best.map(|b| b.epoch).ok_or(Error::EmptyBatch {
        op: "locate_min_test_loss",
    })
}
