//! Softmax cross-entropy loss for classification training.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Mean softmax cross-entropy over a batch and its gradient in the logits.
///
/// The log-probabilities are stabilized by subtracting each row's maximum
/// logit before exponentiating, so arbitrarily large logits stay finite.
/// The gradient is `(softmax(logits) − labels) / d` with `d` the batch
/// size, matching the mean reduction of the loss. Labels are expected as
/// one-hot rows; the formulas remain valid for any distribution rows.
///
/// # Errors
/// Fails when logits and labels differ in shape.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != labels.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            left_rows: logits.rows(),
            left_cols: logits.cols(),
            right_rows: labels.rows(),
            right_cols: labels.cols(),
        });
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyBatch {
            op: "softmax_cross_entropy",
        });
    }
    let d = logits.rows();
    let n = logits.cols();
    let mut grad = Matrix::zeros(d, n);
    let mut total_loss = 0.0;
    let inv_d = 1.0 / d as f64;
    for i in 0..d {
        let row = logits.row(i);
        let label_row = labels.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum_exp = 0.0;
        for &v in row {
            sum_exp += (v - max).exp();
        }
        let log_sum = sum_exp.ln();
        let grad_row = grad.row_mut(i);
        for k in 0..n {
            let log_p = (row[k] - max) - log_sum;
            total_loss -= label_row[k] * log_p;
            let p = log_p.exp();
            grad_row[k] = (p - label_row[k]) * inv_d;
        }
    }
    Ok((total_loss * inv_d, grad))
}
