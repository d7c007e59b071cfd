//! Built-in verification battery: fast, deterministic self-checks of the
//! numerical core, printable as a pass/fail table.
//!
//! The battery cross-checks independent computations against each other —
//! backpropagated Jacobians against finite differences, the layerwise
//! kernel reconstruction against the direct Jacobian Gram (including a
//! deliberate sign corruption that must be caught), spectral invariants,
//! closed-form effective-rank values, and recovery of a known
//! adaptation-rate slope.

use crate::dynamics::adaptation_rate;
use crate::linalg::Matrix;
use crate::nn::{
    forward, init_params, per_sample_jacobian, Activation, Init, NetworkSpec, ParameterSet,
    Parametrization,
};
use crate::ntk::{ck_decomposition, compute_snapshot_pair, effective_rank, reconstruct_from_parts};

/// Result of one verification check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    /// Short stable name, printable in a table.
    pub name: &'static str,
    /// Whether the check passed.
    pub passed: bool,
    /// Observed values and residuals (also shown on success).
    pub detail: String,
}

/// True when every check in the battery passed.
pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// Run the full battery. Deterministic: fixed seeds, no configuration.
pub fn run_verification() -> Vec<CheckOutcome> {
    vec![
        check_effective_rank_toys(),
        check_jacobian_finite_differences(),
        check_ck_reconstruction(),
        check_ck_sign_mutation(),
        check_spectral_invariants(),
        check_adaptation_slope_recovery(),
    ]
}

fn check_effective_rank_toys() -> CheckOutcome {
    let outcome = (|| -> Result<(f64, f64), String> {
        let equal = effective_rank(&[0.5, 0.5]).map_err(|e| e.to_string())?;
        let skewed = effective_rank(&[1.0 / 3.0, 2.0 / 3.0]).map_err(|e| e.to_string())?;
        Ok((equal, skewed))
    })();
    match outcome {
        Ok((equal, skewed)) => {
            let equal_ok = (equal - 2.0).abs() <= 1e-12;
            let skewed_ok = (skewed - 1.889882).abs() <= 1e-5 && skewed < 2.0;
            CheckOutcome {
                name: "effective-rank toy spectra",
                passed: equal_ok && skewed_ok,
                detail: format!(
                    "Γ(diag(1/2,1/2)) = {equal} (expected 2 within 1e-12); \
                     Γ(diag(1/3,2/3)) = {skewed} (expected 1.889882 within 1e-5, < 2)"
                ),
            }
        }
        Err(message) => CheckOutcome {
            name: "effective-rank toy spectra",
            passed: false,
            detail: message,
        },
    }
}

fn test_network() -> (NetworkSpec, ParameterSet, Matrix) {
    let spec = NetworkSpec {
        input_dim: 5,
        hidden_widths: vec![8, 6],
        output_dim: 2,
        activation: Activation::Relu,
        parametrization: Parametrization::Standard,
        init: Init::LecunNormal,
        seed: 2024,
    };
    let params = init_params(&spec).expect("valid fixed spec");
    let batch = Matrix::from_rows(&[
        vec![0.31, -0.47, 0.88, 0.12, -0.66],
        vec![-0.15, 0.72, -0.33, 0.54, 0.09],
        vec![0.91, 0.24, -0.78, -0.41, 0.37],
    ])
    .expect("fixed batch");
    (spec, params, batch)
}

fn check_jacobian_finite_differences() -> CheckOutcome {
    let name = "jacobian vs finite differences";
    let (spec, params, batch) = test_network();
    let jacobian = match per_sample_jacobian(&spec, &params, &batch) {
        Ok(j) => j,
        Err(e) => {
            return CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    let step = 1e-5;
    let scale = jacobian.max_abs();
    let mut max_relative = 0.0f64;
    let mut perturbed = params.clone();
    for p in 0..params.len() {
        let original = params.values[p];
        perturbed.values[p] = original + step;
        let (plus, _) = forward(&spec, &perturbed, &batch).expect("forward");
        perturbed.values[p] = original - step;
        let (minus, _) = forward(&spec, &perturbed, &batch).expect("forward");
        perturbed.values[p] = original;
        for sample in 0..batch.rows() {
            for output in 0..spec.output_dim {
                let oracle =
                    (plus.get(sample, output) - minus.get(sample, output)) / (2.0 * step);
                let row = sample * spec.output_dim + output;
                let delta = (jacobian.get(row, p) - oracle).abs();
                let denom = oracle.abs().max(1e-3 * scale);
                max_relative = max_relative.max(delta / denom);
            }
        }
    }
    CheckOutcome {
        name,
        passed: max_relative <= 1e-5,
        detail: format!("max relative error {max_relative:.3e} (tolerance 1e-5)"),
    }
}

fn ck_network() -> (NetworkSpec, ParameterSet, Matrix) {
    let spec = NetworkSpec {
        input_dim: 6,
        hidden_widths: vec![12, 10, 8],
        output_dim: 1,
        activation: Activation::Relu,
        parametrization: Parametrization::NtkBiasFree,
        init: Init::LecunNormal,
        seed: 77,
    };
    let params = init_params(&spec).expect("valid fixed spec");
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            (0..6)
                .map(|j| ((i * 6 + j) as f64 * 0.37).sin())
                .collect()
        })
        .collect();
    let batch = Matrix::from_rows(&rows).expect("fixed batch");
    (spec, params, batch)
}

fn relative_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        diff += (x - y) * (x - y);
        norm += y * y;
    }
    (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
}

fn check_ck_reconstruction() -> CheckOutcome {
    let name = "layerwise kernel reconstruction";
    let (spec, params, batch) = ck_network();
    let outcome = (|| {
        let decomposition = ck_decomposition(&spec, &params, &batch)?;
        let direct = compute_snapshot_pair(&spec, &params, &batch, "verify")?;
        Ok::<_, crate::Error>(relative_frobenius_error(
            &decomposition.reconstructed,
            &direct.raw.kernel,
        ))
    })();
    match outcome {
        Ok(error) => CheckOutcome {
            name,
            passed: error <= 1e-8,
            detail: format!("relative Frobenius error {error:.3e} (tolerance 1e-8)"),
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn check_ck_sign_mutation() -> CheckOutcome {
    let name = "sign corruption is detected";
    let (spec, params, batch) = ck_network();
    let outcome = (|| {
        let decomposition = ck_decomposition(&spec, &params, &batch)?;
        let mut corrupted = decomposition.sensitivity_grams.clone();
        corrupted[0] = corrupted[0].scale(-1.0);
        let rebuilt = reconstruct_from_parts(&decomposition.conjugate_kernels, &corrupted)?;
        Ok::<_, crate::Error>(relative_frobenius_error(
            &rebuilt,
            &decomposition.reconstructed,
        ))
    })();
    match outcome {
        Ok(error) => CheckOutcome {
            name,
            passed: error > 1e-4,
            detail: format!(
                "corrupted reconstruction residual {error:.3e} (must exceed 1e-4)"
            ),
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn check_spectral_invariants() -> CheckOutcome {
    let name = "kernel spectral invariants";
    let (spec, params, batch) = test_network();
    let pair = match compute_snapshot_pair(&spec, &params, &batch, "verify") {
        Ok(p) => p,
        Err(e) => {
            return CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    let min_eigenvalue = pair
        .raw
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let eigen_sum: f64 = pair.raw.eigenvalues.iter().sum();
    let trace_residual = (eigen_sum - pair.raw.trace).abs() / pair.raw.trace.abs().max(1.0);
    let mut diagonal_residual = 0.0f64;
    for i in 0..pair.normalized.kernel.rows() {
        diagonal_residual = diagonal_residual.max((pair.normalized.kernel.get(i, i) - 1.0).abs());
    }
    let symmetry = pair.raw.kernel.symmetry_defect().unwrap_or(f64::INFINITY);
    let psd_ok = min_eigenvalue >= -1e-10 * pair.raw.trace.max(0.0);
    let passed =
        psd_ok && trace_residual <= 1e-9 && diagonal_residual <= 1e-10 && symmetry == 0.0;
    CheckOutcome {
        name,
        passed,
        detail: format!(
            "min eigenvalue {min_eigenvalue:.3e} (bound {:.3e}); \
             eigenvalue-sum residual {trace_residual:.3e} (tolerance 1e-9); \
             normalized-diagonal residual {diagonal_residual:.3e} (tolerance 1e-10); \
             symmetry defect {symmetry:.3e}",
            -1e-10 * pair.raw.trace.max(0.0)
        ),
    }
}

fn check_adaptation_slope_recovery() -> CheckOutcome {
    let name = "adaptation-rate slope recovery";
    // Exact affine relation: trace = 40 − 5·log L, log L falling linearly.
    let epochs = 200;
    let log_loss: Vec<f64> = (0..epochs).map(|t| 2.0 - 0.01 * t as f64).collect();
    let trace: Vec<f64> = log_loss.iter().map(|&l| 40.0 - 5.0 * l).collect();
    let mut worst = 0.0f64;
    for window in [5usize, 10, 20] {
        match adaptation_rate(&trace, &log_loss, window) {
            Ok(rates) => {
                let defined: Vec<f64> = rates.into_iter().flatten().collect();
                if defined.is_empty() {
                    return CheckOutcome {
                        name,
                        passed: false,
                        detail: format!("window {window}: no defined rates"),
                    };
                }
                for chi in defined {
                    worst = worst.max((chi + 5.0).abs() / 5.0);
                }
            }
            Err(e) => {
                return CheckOutcome {
                    name,
                    passed: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    CheckOutcome {
        name,
        passed: worst <= 0.01,
        detail: format!(
            "slope -5 recovered with max relative error {worst:.3e} over windows 5/10/20 (tolerance 1e-2)"
        ),
    }
}

/// Format the battery as an aligned pass/fail table.
pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for outcome in outcomes {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "[{status}] {:<width$}  {}\n",
            outcome.name, outcome.detail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes_every_check() {
        let outcomes = run_verification();
        assert_eq!(outcomes.len(), 6);
        for outcome in &outcomes {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
        assert!(all_passed(&outcomes));
    }

    #[test]
    fn table_includes_equal_spectrum_line() {
        let outcomes = run_verification();
        let table = format_table(&outcomes);
        assert!(
            table.contains("Γ(diag(1/2,1/2)) = 2"),
            "table must state the equal-spectrum toy value:\n{table}"
        );
        assert!(table.contains("[PASS]"));
    }

    #[test]
    fn mutation_check_reports_large_residual() {
        let outcome = check_ck_sign_mutation();
        assert!(outcome.passed, "{}", outcome.detail);
        // The reported residual itself must be far above the detection
        // threshold, not marginal.
        let residual: f64 = outcome
            .detail
            .split_whitespace()
            .find_map(|tok| tok.parse::<f64>().ok())
            .expect("detail carries the residual");
        assert!(residual > 1e-2, "residual {residual} unexpectedly small");
    }
}
