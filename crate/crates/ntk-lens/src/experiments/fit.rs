//! Power-law fitting in log–log space and detection of the width where
//! effective-rank growth gives way to a plateau.
//!
//! Fits are ordinary least squares of `ln y` on `ln x`. The transition
//! detector compares a single line against a continuous two-segment fit
//! over candidate breakpoints taken from the sweep grid itself, and only
//! accepts a breakpoint when the two-segment fit removes at least 20% of
//! the residual and the post-break slope is essentially flat.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Result of a least-squares power-law fit `y ≈ e^c · x^α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Fitted exponent α (slope in log–log space).
    pub exponent: f64,
    /// Fitted log-prefactor c (intercept in log–log space).
    pub log_prefactor: f64,
    /// Coefficient of determination of the log–log regression, in [0, 1].
    pub r_squared: f64,
    /// Smallest x actually used in the fit.
    pub x_min: f64,
    /// Largest x actually used in the fit.
    pub x_max: f64,
}

/// Outcome of breakpoint detection on an effective-rank-vs-width series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    /// True when a plateau onset was accepted; all optional fields are
    /// populated exactly when this is true (except `alpha_beta`, which
    /// additionally needs positive β values past the breakpoint).
    pub transition_detected: bool,
    /// Width at which the plateau begins.
    pub breakpoint: Option<f64>,
    /// Log–log slope of the rising segment before the breakpoint.
    pub pre_break_exponent: Option<f64>,
    /// Log–log slope after the breakpoint (|slope| < 0.1 when accepted).
    pub post_break_slope: Option<f64>,
    /// Power law fitted to the trace-ratio series over widths at and
    /// beyond the breakpoint.
    pub alpha_beta: Option<PowerLawFit>,
    /// Mean effective rank over widths at and beyond the breakpoint.
    pub plateau_gamma: Option<f64>,
    /// Fractional residual improvement of the best two-segment fit over
    /// the single line, reported whether or not a transition is accepted.
    pub residual_improvement: f64,
}

/// Minimum fractional SSE improvement for accepting a breakpoint.
pub const TRANSITION_MIN_IMPROVEMENT: f64 = 0.20;
/// Maximum post-break |slope| for accepting a breakpoint.
pub const TRANSITION_MAX_POST_SLOPE: f64 = 0.1;

/// Fit `y ≈ e^c · x^α` by least squares of `ln y` on `ln x`, optionally
/// restricted to points with `x` in the inclusive `range`.
///
/// A bit-for-bit constant `y` yields exponent exactly 0 with r² = 1.
///
/// # Errors
/// Fails when fewer than 3 points fall in range, on a length mismatch, or
/// on nonpositive/non-finite values.
pub fn fit_power_law(x: &[f64], y: &[f64], range: Option<(f64, f64)>) -> Result<PowerLawFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument {
            op: "fit_power_law",
            reason: format!("{} x values vs {} y values", x.len(), y.len()),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&xi, &yi) in x.iter().zip(y) {
        if let Some((lo, hi)) = range {
            if xi < lo || xi > hi {
                continue;
            }
        }
        if !(xi > 0.0 && yi > 0.0 && xi.is_finite() && yi.is_finite()) {
            return Err(Error::InvalidArgument {
                op: "fit_power_law",
                reason: format!("point ({xi}, {yi}) is not strictly positive and finite"),
            });
        }
        xs.push(xi);
        ys.push(yi);
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument {
            op: "fit_power_law",
            reason: format!("need at least 3 points in range, have {}", xs.len()),
        });
    }
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ys.windows(2).all(|w| w[0] == w[1]) {
        return Ok(PowerLawFit {
            exponent: 0.0,
            log_prefactor: ys[0].ln(),
            r_squared: 1.0,
            x_min,
            x_max,
        });
    }
    let ln_x: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ln_y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = ln_x.len() as f64;
    let mean_x = ln_x.iter().sum::<f64>() / n;
    let mean_y = ln_y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&lx, &ly) in ln_x.iter().zip(&ln_y) {
        sxy += (lx - mean_x) * (ly - mean_y);
        sxx += (lx - mean_x) * (lx - mean_x);
        syy += (ly - mean_y) * (ly - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument {
            op: "fit_power_law",
            reason: "all x values coincide; slope is undefined".to_string(),
        });
    }
    let exponent = sxy / sxx;
    let log_prefactor = mean_y - exponent * mean_x;
    let mut ss_res = 0.0;
    for (&lx, &ly) in ln_x.iter().zip(&ln_y) {
        let predicted = log_prefactor + exponent * lx;
        ss_res += (ly - predicted) * (ly - predicted);
    }
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        exponent,
        log_prefactor,
        r_squared,
        x_min,
        x_max,
    })
}

/// Locate the width where effective-rank growth plateaus.
///
/// Fits `ln Γ` vs `ln m` with one line and with a continuous two-segment
/// line broken at each interior sweep width; the best breakpoint is
/// accepted when it removes ≥ 20% of the single-line SSE and leaves a
/// post-break |slope| below 0.1. When accepted, the trace-ratio series is
/// power-law fitted over widths at and beyond the breakpoint.
///
/// # Errors
/// Fails with fewer than 5 points, mismatched lengths, or nonpositive
/// widths/Γ values.
pub fn detect_transition(
    widths: &[f64],
    gamma_min: &[f64],
    beta: &[f64],
) -> Result<TransitionReport> {
    if widths.len() != gamma_min.len() || widths.len() != beta.len() {
        return Err(Error::InvalidArgument {
            op: "detect_transition",
            reason: format!(
                "length mismatch: {} widths, {} gamma values, {} beta values",
                widths.len(),
                gamma_min.len(),
                beta.len()
            ),
        });
    }
    if widths.len() < 5 {
        return Err(Error::InvalidArgument {
            op: "detect_transition",
            reason: format!("need at least 5 sweep points, have {}", widths.len()),
        });
    }
    for (&m, &g) in widths.iter().zip(gamma_min) {
        if !(m > 0.0 && g > 0.0 && m.is_finite() && g.is_finite()) {
            return Err(Error::InvalidArgument {
                op: "detect_transition",
                reason: format!("point (width {m}, gamma {g}) is not strictly positive"),
            });
        }
    }
    if !widths.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument {
            op: "detect_transition",
            reason: "widths must be strictly increasing".to_string(),
        });
    }
    let ln_m: Vec<f64> = widths.iter().map(|v| v.ln()).collect();
    let ln_g: Vec<f64> = gamma_min.iter().map(|v| v.ln()).collect();

    let single_sse = line_sse(&ln_m, &ln_g);

    let mut best: Option<(usize, [f64; 3], f64)> = None;
    for candidate in 1..widths.len() - 1 {
        if let Some((coeffs, sse)) = two_segment_fit(&ln_m, &ln_g, ln_m[candidate]) {
            if best.as_ref().is_none_or(|(_, _, best_sse)| sse < *best_sse) {
                best = Some((candidate, coeffs, sse));
            }
        }
    }
    let Some((break_index, coeffs, two_segment_sse)) = best else {
        return Ok(TransitionReport {
            transition_detected: false,
            breakpoint: None,
            pre_break_exponent: None,
            post_break_slope: None,
            alpha_beta: None,
            plateau_gamma: None,
            residual_improvement: 0.0,
        });
    };
    let residual_improvement = if single_sse > 0.0 {
        (single_sse - two_segment_sse) / single_sse
    } else {
        0.0
    };
    let post_slope = coeffs[2];
    let accepted = residual_improvement >= TRANSITION_MIN_IMPROVEMENT
        && post_slope.abs() < TRANSITION_MAX_POST_SLOPE;
    if !accepted {
        return Ok(TransitionReport {
            transition_detected: false,
            breakpoint: None,
            pre_break_exponent: None,
            post_break_slope: None,
            alpha_beta: None,
            plateau_gamma: None,
            residual_improvement,
        });
    }
    let breakpoint = widths[break_index];
    let alpha_beta = fit_power_law(widths, beta, Some((breakpoint, widths[widths.len() - 1]))).ok();
    let post_values: Vec<f64> = gamma_min[break_index..].to_vec();
    let plateau_gamma = post_values.iter().sum::<f64>() / post_values.len() as f64;
    Ok(TransitionReport {
        transition_detected: true,
        breakpoint: Some(breakpoint),
        pre_break_exponent: Some(coeffs[1]),
        post_break_slope: Some(post_slope),
        alpha_beta,
        plateau_gamma: Some(plateau_gamma),
        residual_improvement,
    })
}

/// SSE of the best single line through `(x, y)`.
fn line_sse(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mean_x) * (yi - mean_y);
        sxx += (xi - mean_x) * (xi - mean_x);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .sum()
}

/// Least-squares continuous two-segment line with hinge at `x_break`,
/// using the basis `[1, min(u, 0), max(u, 0)]` with `u = x − x_break`.
/// Returns the coefficients `[level, pre-slope, post-slope]` and the SSE,
/// or `None` when the normal equations are singular.
fn two_segment_fit(x: &[f64], y: &[f64], x_break: f64) -> Option<([f64; 3], f64)> {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - x_break;
        let phi = [1.0, u.min(0.0), u.max(0.0)];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += phi[r] * phi[c];
            }
            b[r] += phi[r] * yi;
        }
    }
    let coeffs = solve3(a, b)?;
    let mut sse = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - x_break;
        let predicted = coeffs[0] + coeffs[1] * u.min(0.0) + coeffs[2] * u.max(0.0);
        sse += (yi - predicted) * (yi - predicted);
    }
    Some((coeffs, sse))
}

/// Solve a 3×3 linear system by Gaussian elimination with partial
/// pivoting; `None` on a (numerically) singular matrix.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot_row = (col..3).max_by(|&r, &s| {
            a[r][col].abs().partial_cmp(&a[s][col].abs()).expect("finite pivots")
        })?;
        if a[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law_is_recovered_to_machine_precision() {
        let x: Vec<f64> = (0..10).map(|k| 2.0f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v.powf(-0.5)).collect();
        let fit = fit_power_law(&x, &y, None).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12, "exponent {}", fit.exponent);
        assert!((fit.log_prefactor - 2.0f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!((fit.x_min, fit.x_max), (1.0, 512.0));
    }

    #[test]
    fn constant_series_has_zero_exponent() {
        let x = [1.0, 3.0, 7.0, 20.0];
        let y = [4.5; 4];
        let fit = fit_power_law(&x, &y, None).unwrap();
        assert_eq!(fit.exponent, 0.0);
        assert_eq!(fit.r_squared, 1.0);
        assert!((fit.log_prefactor - 4.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn noisy_known_exponent_lands_in_band() {
        // 20 log-spaced points on [1, 1e4], y = 3x^0.7 with 5%
        // multiplicative noise: recovered exponent within [0.6, 0.8].
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..20)
            .map(|k| 10f64.powf(4.0 * k as f64 / 19.0))
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let noise: f64 = rng.gen_range(-1.0..1.0);
                3.0 * v.powf(0.7) * (1.0 + 0.05 * noise)
            })
            .collect();
        let fit = fit_power_law(&x, &y, None).unwrap();
        assert!(
            (0.6..=0.8).contains(&fit.exponent),
            "exponent {} outside [0.6, 0.8]",
            fit.exponent
        );
    }

    #[test]
    fn range_restricts_the_points_used() {
        // Power law with slope −1 below x=100 and slope 0 above; fitting
        // only the tail sees the flat part.
        let x: Vec<f64> = (0..12).map(|k| 2.0f64.powi(k)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v <= 128.0 { 100.0 / v } else { 100.0 / 128.0 })
            .collect();
        let tail = fit_power_law(&x, &y, Some((256.0, 4096.0))).unwrap();
        assert_eq!(tail.exponent, 0.0);
        assert_eq!((tail.x_min, tail.x_max), (256.0, 2048.0));
        let full = fit_power_law(&x, &y, None).unwrap();
        assert!(full.exponent < -0.5);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let x = [1.0, 2.0, 4.0];
        assert!(fit_power_law(&x, &[1.0, -1.0, 2.0], None).is_err());
        assert!(fit_power_law(&x, &[1.0, 0.0, 2.0], None).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0], None).is_err());
        assert!(fit_power_law(&x, &[1.0, 2.0, 3.0], Some((10.0, 20.0))).is_err());
        assert!(fit_power_law(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], None).is_err());
    }

    fn plateau_series(break_width: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let widths: Vec<f64> = (3..=12).map(|k| 2.0f64.powi(k)).collect(); // 8..4096
        let gamma: Vec<f64> = widths
            .iter()
            .map(|&m| {
                if m <= break_width {
                    2.0 * m.powf(0.3)
                } else {
                    2.0 * break_width.powf(0.3)
                }
            })
            .collect();
        let beta: Vec<f64> = widths.iter().map(|&m| 5.0 * m.powf(-0.8)).collect();
        (widths, gamma, beta)
    }

    #[test]
    fn plateau_breakpoint_is_found_within_one_bin() {
        let (widths, gamma, beta) = plateau_series(512.0);
        let report = detect_transition(&widths, &gamma, &beta).unwrap();
        assert!(report.transition_detected);
        let breakpoint = report.breakpoint.unwrap();
        assert!(
            [256.0, 512.0, 1024.0].contains(&breakpoint),
            "breakpoint {breakpoint} more than one bin from 512"
        );
        assert!((report.pre_break_exponent.unwrap() - 0.3).abs() < 0.05);
        assert!(report.post_break_slope.unwrap().abs() < 0.1);
        let plateau = report.plateau_gamma.unwrap();
        assert!((plateau - 2.0 * 512.0f64.powf(0.3)).abs() / plateau < 0.05);
        let alpha_beta = report.alpha_beta.unwrap();
        assert!((alpha_beta.exponent + 0.8).abs() < 1e-10);
    }

    #[test]
    fn pure_power_law_reports_no_transition() {
        let widths: Vec<f64> = (3..=12).map(|k| 2.0f64.powi(k)).collect();
        let gamma: Vec<f64> = widths.iter().map(|&m| 2.0 * m.powf(0.3)).collect();
        let beta: Vec<f64> = widths.iter().map(|&m| 5.0 * m.powf(-0.8)).collect();
        let report = detect_transition(&widths, &gamma, &beta).unwrap();
        assert!(!report.transition_detected);
        assert!(report.breakpoint.is_none());
    }

    #[test]
    fn breakpoint_is_invariant_to_uniform_gamma_rescaling() {
        let (widths, gamma, beta) = plateau_series(512.0);
        let scaled: Vec<f64> = gamma.iter().map(|&g| 10.0 * g).collect();
        let a = detect_transition(&widths, &gamma, &beta).unwrap();
        let b = detect_transition(&widths, &scaled, &beta).unwrap();
        assert_eq!(a.breakpoint, b.breakpoint);
        assert_eq!(a.transition_detected, b.transition_detected);
    }

    #[test]
    fn too_few_points_are_rejected() {
        let widths = [8.0, 16.0, 32.0, 64.0];
        let gamma = [1.0, 2.0, 3.0, 4.0];
        let beta = [1.0, 1.0, 1.0, 1.0];
        assert!(detect_transition(&widths, &gamma, &beta).is_err());
    }
}
