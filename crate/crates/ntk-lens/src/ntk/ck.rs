//! Layerwise conjugate-kernel decomposition of the tangent kernel.
//!
//! For the bias-free scalar-output form (hidden layers `X_ℓ = σ(W_ℓ X_{ℓ−1}) / √w_ℓ`,
//! readout `f = wᵀ X_L`), the tangent kernel splits exactly into per-layer
//! contributions:
//!
//! ```text
//! Θ = C_L + Σ_{ℓ=1..L}  Σ_ℓ ⊙ C_{ℓ−1}
//! ```
//!
//! where `C_ℓ` is the Gram matrix of layer-`ℓ` activations (the conjugate
//! kernel, `C_0` being the input Gram), `Σ_ℓ = S_ℓᵀ S_ℓ` is the kernel
//! sensitivity, and column `α` of `S_ℓ` is the gradient of the output with
//! respect to layer `ℓ`'s pre-activation, accumulated right-to-left through
//! the activation gates:
//!
//! ```text
//! s_α^L = D_α^L · w/√w_L,      s_α^ℓ = D_α^ℓ · (W_{ℓ+1}ᵀ s_α^{ℓ+1})/√w_ℓ,
//! ```
//!
//! with `D_α^k = diag(σ′(W_k x_α^{k−1}))` evaluated at the pre-activations.
//! This reconstruction is an independent oracle for the direct Jacobian-Gram
//! kernel: the two must agree to near machine precision on any bias-free
//! scalar-output network.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{forward, NetworkSpec, ParameterSet, Parametrization};

/// Per-layer pieces of the decomposition plus the assembled kernel.
#[derive(Clone, Debug)]
pub struct CkDecomposition {
    /// Conjugate kernels `C_0 … C_L` (`d × d` Grams of activations;
    /// `C_0` is the input Gram).
    pub conjugate_kernels: Vec<Matrix>,
    /// Kernel sensitivities `Σ_1 … Σ_L` (`d × d` Grams of sensitivity
    /// columns).
    pub sensitivity_grams: Vec<Matrix>,
    /// `C_L + Σ_ℓ Σ_ℓ ⊙ C_{ℓ−1}` — must match the direct tangent kernel.
    pub reconstructed: Matrix,
}

/// Assemble the reconstructed kernel from its parts.
///
/// Exposed separately so self-checks can corrupt one part and confirm the
/// equivalence test detects it.
///
/// # Errors
/// Fails when the part lists are inconsistent in length or shape.
pub fn reconstruct_from_parts(
    conjugate_kernels: &[Matrix],
    sensitivity_grams: &[Matrix],
) -> Result<Matrix> {
    if conjugate_kernels.len() != sensitivity_grams.len() + 1 {
        return Err(Error::InvalidArgument {
            op: "reconstruct_from_parts",
            reason: format!(
                "need one more conjugate kernel than sensitivities (got {} and {})",
                conjugate_kernels.len(),
                sensitivity_grams.len()
            ),
        });
    }
    let last = conjugate_kernels
        .last()
        .ok_or(Error::InvalidArgument {
            op: "reconstruct_from_parts",
            reason: "no conjugate kernels given".to_string(),
        })?;
    let mut total = last.clone();
    for (sigma, ck_below) in sensitivity_grams.iter().zip(conjugate_kernels.iter()) {
        total = total.add(&sigma.hadamard(ck_below)?)?;
    }
    Ok(total)
}

/// Decompose the tangent kernel of a bias-free scalar-output network on a
/// probe batch into layerwise conjugate-kernel contributions.
///
/// # Errors
/// Fails when the network is not in the bias-free parametrization or has
/// more than one output (the decomposition is derived for the scalar
/// readout form), or on an empty probe batch.
pub fn ck_decomposition(
    spec: &NetworkSpec,
    params: &ParameterSet,
    probe: &Matrix,
) -> Result<CkDecomposition> {
    spec.validate()?;
    if spec.parametrization != Parametrization::NtkBiasFree {
        return Err(Error::InvalidSpec {
            reason: "conjugate-kernel decomposition requires the bias-free parametrization"
                .to_string(),
        });
    }
    if spec.output_dim != 1 {
        return Err(Error::InvalidSpec {
            reason: format!(
                "conjugate-kernel decomposition requires a scalar readout (output_dim = {})",
                spec.output_dim
            ),
        });
    }
    if probe.rows() == 0 {
        return Err(Error::EmptyBatch {
            op: "ck_decomposition",
        });
    }
    let (_, cache) = forward(spec, params, probe)?;
    let depth = spec.hidden_widths.len();
    let d = probe.rows();

    // C_0 … C_L: Grams of the input batch and each hidden layer's output
    // (activations already include the 1/√w prefactor).
    let conjugate_kernels: Vec<Matrix> = (0..=depth).map(|l| cache.activations[l].gram()).collect();

    // Sensitivity rows per layer: sensitivities[l - 1] is a d × w_l matrix
    // whose row α is s_α^l.
    let readout = params.weight(depth); // 1 × w_L
    let top_width = spec.hidden_widths[depth - 1];
    let inv_sqrt_top = 1.0 / (top_width as f64).sqrt();
    let mut sensitivities: Vec<Matrix> = spec
        .hidden_widths
        .iter()
        .map(|&w| Matrix::zeros(d, w))
        .collect();
    for alpha in 0..d {
        // s^L = D^L · w/√w_L.
        let top_pre = cache.pre_activations[depth - 1].row(alpha);
        let mut current: Vec<f64> = (0..top_width)
            .map(|u| spec.activation.derivative(top_pre[u]) * readout[u] * inv_sqrt_top)
            .collect();
        sensitivities[depth - 1].row_mut(alpha).copy_from_slice(&current);
        // s^l = D^l · (W_{l+1}ᵀ s^{l+1})/√w_l, walking down to layer 1.
        for l in (1..depth).rev() {
            let w_above = params.weight(l); // w_{l+1} × w_l
            let width = spec.hidden_widths[l - 1];
            let width_above = spec.hidden_widths[l];
            let inv_sqrt = 1.0 / (width as f64).sqrt();
            let pre = cache.pre_activations[l - 1].row(alpha);
            let mut next = vec![0.0; width];
            for (u, &s_u) in current.iter().enumerate().take(width_above) {
                if s_u == 0.0 {
                    continue;
                }
                let w_row = &w_above[u * width..(u + 1) * width];
                for (n, w) in next.iter_mut().zip(w_row) {
                    *n += s_u * w;
                }
            }
            for (j, n) in next.iter_mut().enumerate() {
                *n *= spec.activation.derivative(pre[j]) * inv_sqrt;
            }
            sensitivities[l - 1].row_mut(alpha).copy_from_slice(&next);
            current = next;
        }
    }
    let sensitivity_grams: Vec<Matrix> = sensitivities.iter().map(|s| s.gram()).collect();
    let reconstructed = reconstruct_from_parts(&conjugate_kernels, &sensitivity_grams)?;
    Ok(CkDecomposition {
        conjugate_kernels,
        sensitivity_grams,
        reconstructed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eigendecompose, DEFAULT_EIGEN_TOL};
    use crate::nn::{init_params, Activation, Init};
    use crate::ntk::compute_ntk;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn bias_free_spec(hidden: Vec<usize>, input_dim: usize, seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_widths: hidden,
            output_dim: 1,
            activation: Activation::Relu,
            parametrization: Parametrization::NtkBiasFree,
            init: Init::LecunNormal,
            seed,
        }
    }

    fn random_probe(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_flat(rows, cols, data).unwrap()
    }

    fn relative_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
        let mut diff = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            diff += (x - y) * (x - y);
        }
        diff.sqrt() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn depth_one_identity_reconstruction_matches_kernel() {
        let mut spec = bias_free_spec(vec![6], 4, 51);
        spec.activation = Activation::Identity;
        let params = init_params(&spec).unwrap();
        let probe = random_probe(52, 5, 4);
        let decomposition = ck_decomposition(&spec, &params, &probe).unwrap();
        let kernel = compute_ntk(&spec, &params, &probe, false, "ck").unwrap().kernel;
        let err = relative_frobenius_error(&decomposition.reconstructed, &kernel);
        assert!(err <= 1e-10, "depth-1 identity reconstruction error {err:e}");
    }

    #[test]
    fn depth_three_relu_reconstruction_matches_kernel() {
        let spec = bias_free_spec(vec![12, 10, 8], 7, 53);
        let params = init_params(&spec).unwrap();
        let probe = random_probe(54, 16, 7);
        let decomposition = ck_decomposition(&spec, &params, &probe).unwrap();
        let kernel = compute_ntk(&spec, &params, &probe, false, "ck").unwrap().kernel;
        let err = relative_frobenius_error(&decomposition.reconstructed, &kernel);
        assert!(err <= 1e-8, "depth-3 ReLU reconstruction error {err:e}");
    }

    #[test]
    fn zero_readout_leaves_only_top_conjugate_kernel() {
        let spec = bias_free_spec(vec![9, 5], 4, 55);
        let mut params = init_params(&spec).unwrap();
        for w in params.weight_mut(2) {
            *w = 0.0;
        }
        let probe = random_probe(56, 6, 4);
        let decomposition = ck_decomposition(&spec, &params, &probe).unwrap();
        for sigma in &decomposition.sensitivity_grams {
            assert!(sigma.data().iter().all(|&v| v == 0.0));
        }
        assert_eq!(
            decomposition.reconstructed,
            *decomposition.conjugate_kernels.last().unwrap()
        );
    }

    #[test]
    fn parts_are_symmetric_psd() {
        let spec = bias_free_spec(vec![8, 6], 5, 57);
        let params = init_params(&spec).unwrap();
        let probe = random_probe(58, 7, 5);
        let decomposition = ck_decomposition(&spec, &params, &probe).unwrap();
        for part in decomposition
            .conjugate_kernels
            .iter()
            .chain(&decomposition.sensitivity_grams)
        {
            assert_eq!(part.symmetry_defect().unwrap(), 0.0);
            let eigen = sym_eigendecompose(part, DEFAULT_EIGEN_TOL).unwrap();
            let min = *eigen.eigenvalues.last().unwrap();
            assert!(min >= -1e-10 * part.trace().unwrap().max(1e-300));
        }
    }

    #[test]
    fn corrupting_a_sensitivity_breaks_the_reconstruction() {
        // Mutation check: the equivalence must be sensitive to sign errors.
        let spec = bias_free_spec(vec![8, 6], 5, 59);
        let params = init_params(&spec).unwrap();
        let probe = random_probe(60, 7, 5);
        let mut decomposition = ck_decomposition(&spec, &params, &probe).unwrap();
        let kernel = compute_ntk(&spec, &params, &probe, false, "ck").unwrap().kernel;
        decomposition.sensitivity_grams[0] = decomposition.sensitivity_grams[0].scale(-1.0);
        let corrupted = reconstruct_from_parts(
            &decomposition.conjugate_kernels,
            &decomposition.sensitivity_grams,
        )
        .unwrap();
        let err = relative_frobenius_error(&corrupted, &kernel);
        assert!(err > 1e-4, "sign corruption went undetected (error {err:e})");
    }

    #[test]
    fn rejects_standard_parametrization_and_vector_output() {
        let probe = random_probe(61, 4, 5);
        let mut standard = bias_free_spec(vec![8], 5, 62);
        standard.parametrization = Parametrization::Standard;
        let params = init_params(&standard).unwrap();
        assert!(matches!(
            ck_decomposition(&standard, &params, &probe),
            Err(Error::InvalidSpec { .. })
        ));
        let mut vector_out = bias_free_spec(vec![8], 5, 63);
        vector_out.output_dim = 2;
        let params = init_params(&vector_out).unwrap();
        assert!(matches!(
            ck_decomposition(&vector_out, &params, &probe),
            Err(Error::InvalidSpec { .. })
        ));
    }
}
