//! Dense real matrix kernels and a symmetric eigensolver.
//!
//! Everything here is plain `f64` with explicit loops and a fixed summation
//! order, so identical inputs always produce identical output bits. The
//! eigensolver is a cyclic Jacobi iteration: at the kernel sizes this crate
//! works with (at most a few thousand rows) it is fast enough and delivers
//! eigenvectors accurate to close to machine precision, which the spectral
//! observables downstream depend on.

use crate::error::{Error, Result};

/// Default off-diagonal threshold factor for [`sym_eigendecompose`]:
/// iteration stops once `max |a_pq| <= DEFAULT_EIGEN_TOL * ||A||_F`.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Relative symmetry defect tolerated on input to the eigensolver.
const SYMMETRY_DEFECT_TOL: f64 = 1e-8;

/// Dense row-major matrix of `f64` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Build a matrix from a flat row-major buffer.
    ///
    /// # Errors
    /// Fails when `data.len() != rows * cols`.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument {
                op: "Matrix::from_flat",
                reason: format!(
                    "buffer length {} does not match {}x{}",
                    data.len(),
                    rows,
                    cols
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build a matrix from nested rows.
    ///
    /// # Errors
    /// Fails on ragged input (rows of unequal length) or zero rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidArgument {
                op: "Matrix::from_rows",
                reason: "no rows given".to_string(),
            });
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidArgument {
                    op: "Matrix::from_rows",
                    reason: format!("row {} has length {}, expected {}", i, row.len(), cols),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(rows, cols)` pair.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Entry at `(i, j)`. Panics on out-of-bounds indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        self.data[i * self.cols + j]
    }

    /// Set entry at `(i, j)`. Panics on out-of-bounds indices.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        self.data[i * self.cols + j] = value;
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.rows, "row {i} out of bounds");
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutable row `i`.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        assert!(i < self.rows, "row {i} out of bounds");
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Flat row-major view of all entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Matrix product `self * other`.
    ///
    /// Summation over the inner index runs in ascending order for every
    /// output entry, so results are reproducible bit-for-bit.
    ///
    /// # Errors
    /// Fails when `self.cols != other.rows`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(self.shape_mismatch("matmul", other));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (j, &bkj) in b_row.iter().enumerate() {
                    out_row[j] += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// Matrix product `self * other^T`, computed as row-by-row dot products.
    ///
    /// # Errors
    /// Fails when `self.cols != other.cols`.
    pub fn matmul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(self.shape_mismatch("matmul_transpose", other));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for j in 0..other.rows {
                out_row[j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// Symmetric Gram product `self * self^T`, mirroring the upper triangle.
    pub fn gram(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let a_row = self.row(i);
            for j in i..n {
                let v = dot(a_row, self.row(j));
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Entry-wise sum.
    ///
    /// # Errors
    /// Fails on shape mismatch.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(self.shape_mismatch("add", other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Entry-wise (Hadamard) product.
    ///
    /// # Errors
    /// Fails on shape mismatch.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(self.shape_mismatch("hadamard", other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copy scaled by a constant.
    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Sum of diagonal entries.
    ///
    /// # Errors
    /// Fails when the matrix is not square.
    pub fn trace(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                op: "trace",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut t = 0.0;
        for i in 0..self.rows {
            t += self.data[i * self.cols + i];
        }
        Ok(t)
    }

    /// Frobenius inner product `Σ_ij a_ij b_ij`.
    ///
    /// # Errors
    /// Fails on shape mismatch.
    pub fn frobenius_inner(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(self.shape_mismatch("frobenius_inner", other));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// Frobenius norm `sqrt(Σ a_ij²)`.
    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Largest absolute entry (`||A||_max`); zero for empty matrices.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference `|a_ij − a_ji|` over all index pairs.
    ///
    /// # Errors
    /// Fails when the matrix is not square.
    pub fn symmetry_defect(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                op: "symmetry_defect",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut defect = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                defect = defect.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        Ok(defect)
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_mismatch(&self, op: &'static str, other: &Matrix) -> Error {
        Error::ShapeMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

/// Dot product with ascending-index summation order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Result of a symmetric eigendecomposition.
///
/// Eigenvalues are sorted descending (stable in the original index on ties)
/// and `eigenvectors` holds the matching unit-norm eigenvectors as columns.
/// Each column is sign-normalized so that its entry of largest magnitude is
/// nonnegative (ties broken by the first such index), which makes repeated
/// decompositions comparable.
#[derive(Clone, Debug)]
pub struct SymmetricEigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// Symmetric eigendecomposition via cyclic Jacobi rotations.
///
/// Sweeps run until the largest off-diagonal magnitude drops below
/// `tol * ||A||_F` (use [`DEFAULT_EIGEN_TOL`] unless there is a reason not
/// to). The input is symmetrized as `(A + A^T)/2` before iterating; an
/// asymmetry beyond `1e-8 * ||A||_max` is rejected instead of silently
/// averaged away.
///
/// # Errors
/// - [`Error::NotSquare`] for rectangular input,
/// - [`Error::NotSymmetric`] when the symmetry defect is too large,
/// - [`Error::NonFinite`] when the input contains NaN or infinities,
/// - [`Error::NoConvergence`] if 100 sweeps do not reach the threshold.
pub fn sym_eigendecompose(a: &Matrix, tol: f64) -> Result<SymmetricEigenResult> {
    if a.rows != a.cols {
        return Err(Error::NotSquare {
            op: "sym_eigendecompose",
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows == 0 {
        return Err(Error::InvalidArgument {
            op: "sym_eigendecompose",
            reason: "empty matrix".to_string(),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "sym_eigendecompose input".to_string(),
        });
    }
    let defect = a.symmetry_defect()?;
    let allowed = SYMMETRY_DEFECT_TOL * a.max_abs();
    if defect > allowed {
        return Err(Error::NotSymmetric { defect, allowed });
    }

    let n = a.rows;
    // Work on the symmetrized copy; only its upper triangle is referenced.
    let mut w = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = 0.5 * (a.data[i * n + j] + a.data[j * n + i]);
        }
    }
    let mut v = Matrix::identity(n);
    let threshold = tol * a.frobenius_norm();

    let mut residual = max_off_diagonal(&w, n);
    let mut converged = residual <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                rotate(&mut w, &mut v, n, p, q, apq);
            }
        }
        residual = max_off_diagonal(&w, n);
        converged = residual <= threshold;
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps,
            residual,
            threshold,
        });
    }

    // Sort descending; `sort_by` is stable, so ties keep original index order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w[j * n + j]
            .partial_cmp(&w[i * n + i])
            .expect("eigenvalues are finite")
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(w[src * n + src]);
        // Sign convention: the entry of largest magnitude ends up nonnegative.
        let mut pivot = 0;
        let mut pivot_abs = v.data[pivot * n + src].abs();
        for r in 1..n {
            let abs = v.data[r * n + src].abs();
            if abs > pivot_abs {
                pivot = r;
                pivot_abs = abs;
            }
        }
        let flip = if v.data[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            eigenvectors.data[r * n + dst] = flip * v.data[r * n + src];
        }
    }

    Ok(SymmetricEigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// One Jacobi rotation annihilating `w[p][q]`, applied to the upper triangle
/// of `w` and accumulated into the eigenvector matrix `v`.
fn rotate(w: &mut [f64], v: &mut Matrix, n: usize, p: usize, q: usize, apq: f64) {
    let theta = (w[q * n + q] - w[p * n + p]) / (2.0 * apq);
    // t = sgn(theta) / (|theta| + sqrt(theta² + 1)), guarded against overflow.
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta < 0.0 { -1.0 } else { 1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);
    let h = t * apq;

    w[p * n + p] -= h;
    w[q * n + q] += h;
    w[p * n + q] = 0.0;

    // Remaining upper-triangle entries in the three index ranges around p, q.
    for j in 0..p {
        let g = w[j * n + p];
        let hh = w[j * n + q];
        w[j * n + p] = g - s * (hh + g * tau);
        w[j * n + q] = hh + s * (g - hh * tau);
    }
    for j in (p + 1)..q {
        let g = w[p * n + j];
        let hh = w[j * n + q];
        w[p * n + j] = g - s * (hh + g * tau);
        w[j * n + q] = hh + s * (g - hh * tau);
    }
    for j in (q + 1)..n {
        let g = w[p * n + j];
        let hh = w[q * n + j];
        w[p * n + j] = g - s * (hh + g * tau);
        w[q * n + j] = hh + s * (g - hh * tau);
    }
    for j in 0..n {
        let g = v.data[j * n + p];
        let hh = v.data[j * n + q];
        v.data[j * n + p] = g - s * (hh + g * tau);
        v.data[j * n + q] = hh + s * (g - hh * tau);
    }
}

/// Largest |entry| in the strict upper triangle.
fn max_off_diagonal(w: &[f64], n: usize) -> f64 {
    let mut m = 0.0_f64;
    for p in 0..n {
        for q in (p + 1)..n {
            m = m.max(w[p * n + q].abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual}, expected {expected} (tol {tol})"
        );
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_flat(rows, cols, data).unwrap()
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let a = random_matrix(rng, n, n);
        a.add(&a.transpose()).unwrap().scale(0.5)
    }

    #[test]
    fn matmul_identity_is_identity_map() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let product = Matrix::identity(2).matmul(&a).unwrap();
        assert_eq!(product, a);
    }

    #[test]
    fn matmul_small_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let product = a.matmul(&b).unwrap();
        assert_eq!(product.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // Independent oracle: textbook i/j/k triple loop, written separately
        // from the implementation's loop order.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 5, 7);
        let b = random_matrix(&mut rng, 7, 3);
        let product = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut expected = 0.0;
                for k in 0..7 {
                    expected += a.get(i, k) * b.get(k, j);
                }
                assert_close(product.get(i, j), expected, 1e-12, "matmul entry");
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("mismatch"), "got: {msg}");
    }

    #[test]
    fn matmul_transpose_matches_matmul_of_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_matrix(&mut rng, 4, 6);
        let b = random_matrix(&mut rng, 5, 6);
        let fast = a.matmul_transpose(&b).unwrap();
        let reference = a.matmul(&b.transpose()).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_close(fast.get(i, j), reference.get(i, j), 1e-12, "A*B^T entry");
            }
        }
    }

    #[test]
    fn gram_is_symmetric_and_matches_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 6, 9);
        let g = a.gram();
        let reference = a.matmul(&a.transpose()).unwrap();
        assert_eq!(g.symmetry_defect().unwrap(), 0.0);
        for i in 0..6 {
            for j in 0..6 {
                assert_close(g.get(i, j), reference.get(i, j), 1e-12, "gram entry");
            }
        }
    }

    #[test]
    fn frobenius_inner_self_is_squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_matrix(&mut rng, 3, 4);
        let inner = a.frobenius_inner(&a).unwrap();
        assert_close(inner, a.frobenius_norm().powi(2), 1e-12, "<A,A>");
    }

    #[test]
    fn frobenius_inner_disjoint_support_is_zero() {
        let a = Matrix::identity(2);
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.frobenius_inner(&b).unwrap(), 0.0);
    }

    #[test]
    fn frobenius_inner_matches_flatten_and_dot_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let mut oracle = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            oracle += x * y;
        }
        assert_close(a.frobenius_inner(&b).unwrap(), oracle, 1e-12, "frobenius");
    }

    #[test]
    fn trace_requires_square() {
        assert!(matches!(
            Matrix::zeros(2, 3).trace(),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn eigen_identity() {
        let result = sym_eigendecompose(&Matrix::identity(2), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(result.eigenvalues, vec![1.0, 1.0]);
    }

    #[test]
    fn eigen_diagonal_sorts_descending() {
        let result =
            sym_eigendecompose(&Matrix::diag(&[1.0 / 3.0, 2.0 / 3.0]), DEFAULT_EIGEN_TOL).unwrap();
        assert_close(result.eigenvalues[0], 2.0 / 3.0, 1e-15, "lambda_1");
        assert_close(result.eigenvalues[1], 1.0 / 3.0, 1e-15, "lambda_2");
    }

    #[test]
    fn eigen_two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenpairs (3, (1,1)/sqrt(2)) and (1, (1,-1)/sqrt(2)).
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let result = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(result.eigenvalues[0], 3.0, 1e-12, "lambda_1");
        assert_close(result.eigenvalues[1], 1.0, 1e-12, "lambda_2");
        let q = &result.eigenvectors;
        assert_close(q.get(0, 0), inv_sqrt2, 1e-12, "q1[0]");
        assert_close(q.get(1, 0), inv_sqrt2, 1e-12, "q1[1]");
        assert_close(q.get(0, 1), inv_sqrt2, 1e-12, "q2[0]");
        assert_close(q.get(1, 1), -inv_sqrt2, 1e-12, "q2[1]");
    }

    #[test]
    fn eigen_orthonormality_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1, 2, 5, 17, 40] {
            let a = random_symmetric(&mut rng, n);
            let result = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
            let q = &result.eigenvectors;

            let qtq = q.transpose().matmul(q).unwrap();
            let identity = Matrix::identity(n);
            let mut max_dev = 0.0_f64;
            for (x, y) in qtq.data().iter().zip(identity.data()) {
                max_dev = max_dev.max((x - y).abs());
            }
            assert!(max_dev <= 1e-10, "n={n}: ||Q^T Q - I||_max = {max_dev:e}");

            let lambda = Matrix::diag(&result.eigenvalues);
            let recon = q.matmul(&lambda).unwrap().matmul(&q.transpose()).unwrap();
            let mut max_err = 0.0_f64;
            for (x, y) in recon.data().iter().zip(a.data()) {
                max_err = max_err.max((x - y).abs());
            }
            let bound = 1e-8 * (1.0 + a.max_abs());
            assert!(max_err <= bound, "n={n}: reconstruction error {max_err:e}");
        }
    }

    #[test]
    fn eigen_sum_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_symmetric(&mut rng, 23);
        let result = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        let sum: f64 = result.eigenvalues.iter().sum();
        let trace = a.trace().unwrap();
        assert!(
            (sum - trace).abs() <= 1e-9 * (1.0 + trace.abs()),
            "eigenvalue sum {sum} vs trace {trace}"
        );
    }

    #[test]
    fn eigen_psd_gram_has_no_significant_negative_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // Rank-deficient Gram: 12 rows spanned by 4 columns.
        let a = random_matrix(&mut rng, 12, 4).gram();
        let result = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        let min = result.eigenvalues.last().copied().unwrap();
        assert!(
            min >= -1e-10 * a.frobenius_norm(),
            "PSD Gram produced eigenvalue {min:e}"
        );
    }

    #[test]
    fn eigen_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = random_symmetric(&mut rng, 15);
        let first = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        let second = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(first.eigenvalues, second.eigenvalues);
        assert_eq!(first.eigenvectors, second.eigenvectors);
    }

    #[test]
    fn eigen_rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eigendecompose(&Matrix::zeros(2, 3), DEFAULT_EIGEN_TOL),
            Err(Error::NotSquare { .. })
        ));
        let skew = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(matches!(
            sym_eigendecompose(&skew, DEFAULT_EIGEN_TOL),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eigen_zero_matrix_and_single_entry() {
        let zero = sym_eigendecompose(&Matrix::zeros(3, 3), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(zero.eigenvalues, vec![0.0, 0.0, 0.0]);
        let single = sym_eigendecompose(&Matrix::diag(&[-4.0]), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(single.eigenvalues, vec![-4.0]);
        assert_eq!(single.eigenvectors.get(0, 0), 1.0);
    }

    #[test]
    fn eigen_sign_convention_pivot_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a = random_symmetric(&mut rng, 9);
        let result = sym_eigendecompose(&a, DEFAULT_EIGEN_TOL).unwrap();
        for col in 0..9 {
            let mut pivot = 0;
            for r in 1..9 {
                if result.eigenvectors.get(r, col).abs()
                    > result.eigenvectors.get(pivot, col).abs()
                {
                    pivot = r;
                }
            }
            assert!(
                result.eigenvectors.get(pivot, col) >= 0.0,
                "column {col} pivot is negative"
            );
        }
    }
}
