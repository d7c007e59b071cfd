//! Empirical tangent kernels and their spectral observables.
//!
//! The kernel of a network on a probe batch is the Gram matrix of per-sample
//! per-output gradients: with `d` samples and `n` outputs it is `(d·n)²`,
//! indexed sample-major (row `i·n + k` belongs to output `k` of sample `i`).
//! Two variants matter downstream: the raw kernel, whose trace tracks overall
//! gradient magnitude, and the normalized-gradient kernel (rows of the
//! Jacobian scaled to unit norm), whose spectrum isolates the *shape* of
//! learning from its magnitude — the effective rank is always taken on the
//! normalized variant in experiment pipelines, the trace always on the raw
//! one.

pub mod ck;

pub use ck::{ck_decomposition, reconstruct_from_parts, CkDecomposition};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigendecompose, Matrix, DEFAULT_EIGEN_TOL};
use crate::nn::{per_sample_jacobian, NetworkSpec, ParameterSet};

/// Jacobian rows with L2 norm below this are left unnormalized (they are
/// numerically zero and dividing by their norm would amplify noise).
pub const GRADIENT_NORM_FLOOR: f64 = 1e-12;

/// Eigenvalues below `1e-14 · λ_max` are treated as exact zeros in entropy
/// sums to avoid log-underflow noise.
const SPECTRUM_CUTOFF_FACTOR: f64 = 1e-14;

/// Relative bound on how negative a numerically computed kernel eigenvalue
/// may be before the kernel is rejected as non-PSD.
const PSD_TOLERANCE: f64 = 1e-10;

/// One measured tangent kernel with its full spectral decomposition.
#[derive(Clone, Debug)]
pub struct NtkSnapshot {
    /// The `(d·n)²` kernel matrix.
    pub kernel: Matrix,
    /// Sum of diagonal entries (equivalently, of raw eigenvalues).
    pub trace: f64,
    /// Raw eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues divided by their sum; sums to 1.
    pub normalized_eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns, sign-normalized by `linalg`.
    pub eigenvectors: Matrix,
    /// Exponential of the von Neumann entropy of the normalized spectrum.
    pub effective_rank: f64,
    /// Where in training this snapshot was taken (e.g. "init", "epoch_40",
    /// "min_test_loss").
    pub epoch_tag: String,
    /// Whether Jacobian rows were scaled to unit norm before the Gram
    /// product.
    pub normalized_gradients: bool,
}

/// Scale each row of a Jacobian to unit L2 norm in place.
///
/// Rows with norm below [`GRADIENT_NORM_FLOOR`] are left untouched: they are
/// numerically zero, and the corresponding kernel rows stay zero rather than
/// becoming amplified noise.
pub fn normalize_gradient_rows(jacobian: &mut Matrix) {
    for i in 0..jacobian.rows() {
        let row = jacobian.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= GRADIENT_NORM_FLOOR {
            let inv = 1.0 / norm;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
    }
}

/// Compute the empirical tangent kernel of `spec`/`params` on a probe batch.
///
/// The kernel is `J Jᵀ` with `J` the `(d·n) × P` per-sample Jacobian; when
/// `normalize_gradients` is set, rows of `J` are scaled to unit norm first.
/// The snapshot carries the full eigendecomposition and effective rank.
///
/// # Errors
/// Fails on an empty probe batch, non-finite Jacobian entries, a spectrum
/// that is negative beyond tolerance, or an all-zero kernel.
pub fn compute_ntk(
    spec: &NetworkSpec,
    params: &ParameterSet,
    probe: &Matrix,
    normalize_gradients: bool,
    epoch_tag: &str,
) -> Result<NtkSnapshot> {
    if probe.rows() == 0 {
        return Err(Error::EmptyBatch { op: "compute_ntk" });
    }
    let mut jacobian = per_sample_jacobian(spec, params, probe)?;
    if !jacobian.is_finite() {
        return Err(Error::NonFinite {
            context: format!("Jacobian entries at snapshot '{epoch_tag}'"),
        });
    }
    if normalize_gradients {
        normalize_gradient_rows(&mut jacobian);
    }
    snapshot_from_kernel(jacobian.gram(), epoch_tag, normalize_gradients)
}

/// A raw and a normalized-gradient snapshot taken from one Jacobian.
#[derive(Clone, Debug)]
pub struct SnapshotPair {
    pub raw: NtkSnapshot,
    pub normalized: NtkSnapshot,
}

/// Compute raw and normalized-gradient snapshots from a single Jacobian
/// evaluation.
///
/// The Jacobian and its Gram product dominate the cost of a snapshot, so the
/// pipeline takes both variants from one pass: the normalized kernel is the
/// raw kernel rescaled by its diagonal, `K′_rs = K_rs / √(K_rr · K_ss)`,
/// which is algebraically identical to normalizing Jacobian rows first (rows
/// whose squared norm falls below the floor are left unscaled).
///
/// # Errors
/// Same conditions as [`compute_ntk`].
pub fn compute_snapshot_pair(
    spec: &NetworkSpec,
    params: &ParameterSet,
    probe: &Matrix,
    epoch_tag: &str,
) -> Result<SnapshotPair> {
    if probe.rows() == 0 {
        return Err(Error::EmptyBatch {
            op: "compute_snapshot_pair",
        });
    }
    let jacobian = per_sample_jacobian(spec, params, probe)?;
    if !jacobian.is_finite() {
        return Err(Error::NonFinite {
            context: format!("Jacobian entries at snapshot '{epoch_tag}'"),
        });
    }
    let raw_kernel = jacobian.gram();
    let rows = raw_kernel.rows();
    let scales: Vec<f64> = (0..rows)
        .map(|r| {
            let diag = raw_kernel.get(r, r);
            let norm = diag.max(0.0).sqrt();
            if norm >= GRADIENT_NORM_FLOOR {
                1.0 / norm
            } else {
                1.0
            }
        })
        .collect();
    let mut normalized_kernel = Matrix::zeros(rows, rows);
    for r in 0..rows {
        for s in r..rows {
            let v = raw_kernel.get(r, s) * scales[r] * scales[s];
            normalized_kernel.set(r, s, v);
            normalized_kernel.set(s, r, v);
        }
    }
    Ok(SnapshotPair {
        raw: snapshot_from_kernel(raw_kernel, epoch_tag, false)?,
        normalized: snapshot_from_kernel(normalized_kernel, epoch_tag, true)?,
    })
}

/// Build a full snapshot (spectrum, effective rank) from a kernel matrix.
fn snapshot_from_kernel(kernel: Matrix, epoch_tag: &str, normalized_gradients: bool) -> Result<NtkSnapshot> {
    let trace = kernel.trace()?;
    let eigen = sym_eigendecompose(&kernel, DEFAULT_EIGEN_TOL)?;
    let min_eigenvalue = *eigen.eigenvalues.last().expect("spectrum nonempty");
    let bound = -PSD_TOLERANCE * trace.max(0.0);
    if min_eigenvalue < bound {
        return Err(Error::KernelNotPsd {
            min_eigenvalue,
            bound,
        });
    }
    let effective_rank = effective_rank(&eigen.eigenvalues)?;
    let sum: f64 = eigen.eigenvalues.iter().sum();
    let normalized_eigenvalues = eigen.eigenvalues.iter().map(|l| l / sum).collect();
    Ok(NtkSnapshot {
        kernel,
        trace,
        eigenvalues: eigen.eigenvalues,
        normalized_eigenvalues,
        eigenvectors: eigen.eigenvectors,
        effective_rank,
        epoch_tag: epoch_tag.to_string(),
        normalized_gradients,
    })
}

/// Effective rank of a nonnegative spectrum: `Γ = exp(−Σ λ̂ ln λ̂)` with
/// `λ̂ = λ/Σλ` and `0·ln 0 := 0`.
///
/// Eigenvalues below `1e-14 · λ_max` (including the tiny negatives a
/// numerical eigensolver produces for PSD matrices) are treated as exact
/// zeros. The result is clamped to `[1, len]`, absorbing last-ulp excursions
/// of the exponential.
///
/// # Errors
/// Fails with [`Error::DegenerateKernel`] when no eigenvalue is strictly
/// positive.
pub fn effective_rank(eigenvalues: &[f64]) -> Result<f64> {
    let lambda_max = eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l));
    if lambda_max <= 0.0 {
        return Err(Error::DegenerateKernel);
    }
    let cutoff = SPECTRUM_CUTOFF_FACTOR * lambda_max;
    let total: f64 = eigenvalues.iter().filter(|&&l| l >= cutoff).sum();
    let mut entropy = 0.0;
    for &l in eigenvalues.iter().filter(|&&l| l >= cutoff) {
        let p = l / total;
        entropy -= p * p.ln();
    }
    Ok(entropy.exp().clamp(1.0, eigenvalues.len() as f64))
}

/// Sum of the diagonal entries of a kernel matrix.
///
/// # Errors
/// Fails when the matrix is not square.
pub fn trace(kernel: &Matrix) -> Result<f64> {
    kernel.trace()
}
