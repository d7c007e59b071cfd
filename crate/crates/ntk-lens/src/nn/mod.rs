//! Dense multilayer perceptrons with manual forward and backward passes.
//!
//! Two parametrizations are supported: a `standard` network (`a = Wh + b`,
//! LeCun-initialized, biases start at zero) and a bias-free `ntk` form in
//! which every hidden layer applies `h = σ(Wx) / √w` with `w` the layer's own
//! width and the readout is a plain linear map. The bias-free form is the one
//! whose tangent kernel decomposes layerwise into conjugate kernels, so it is
//! kept as a first-class citizen rather than a test fixture.
//!
//! Besides the batch loss gradient used for training, the module computes
//! per-sample per-output Jacobians (one backward pass per output unit), which
//! downstream code turns into empirical tangent kernels.

pub mod loss;
pub mod optim;

pub use loss::softmax_cross_entropy;
pub use optim::{AdamState, SgdMomentumState};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Pointwise nonlinearity applied to hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    /// σ(x).
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// σ′(x). The ReLU derivative at exactly 0 is defined as 0; this only
    /// affects Jacobians on a measure-zero set of inputs.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// How layers scale and whether biases exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// `a = Wh + b`, `h = σ(a)`; biases present, initialized to zero.
    Standard,
    /// Bias-free form: hidden layers compute `h = σ(Wx) / √w` with `w` the
    /// layer width; the readout is a plain linear map with no prefactor.
    NtkBiasFree,
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Each weight drawn from N(0, 1/fan_in).
    LecunNormal,
    /// Each weight uniform in ±√(6/(fan_in+fan_out)).
    XavierUniform,
}

/// Architecture and initialization description of a dense network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub parametrization: Parametrization,
    pub init: Init,
    pub seed: u64,
}

impl NetworkSpec {
    /// Check the structural invariants: all dimensions at least 1 and at
    /// least one hidden layer.
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "input_dim and output_dim must be >= 1 (got {} and {})",
                    self.input_dim, self.output_dim
                ),
            });
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidSpec {
                reason: "at least one hidden layer is required".to_string(),
            });
        }
        if let Some(&w) = self.hidden_widths.iter().find(|&&w| w == 0) {
            return Err(Error::InvalidSpec {
                reason: format!("hidden width {w} must be >= 1"),
            });
        }
        Ok(())
    }

    /// Whether this parametrization carries bias vectors.
    pub fn has_biases(&self) -> bool {
        self.parametrization == Parametrization::Standard
    }

    /// `(fan_in, fan_out)` for every weight layer, input to readout.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    /// Number of weight layers (hidden layers plus readout).
    pub fn n_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let biases = self.has_biases();
        self.layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + if biases { fan_out } else { 0 })
            .sum()
    }

    /// Hidden-layer output prefactor: `1/√width` in the bias-free form,
    /// 1 otherwise. The readout never has a prefactor.
    fn prefactor(&self, layer: usize) -> f64 {
        match self.parametrization {
            Parametrization::Standard => 1.0,
            Parametrization::NtkBiasFree => {
                if layer < self.hidden_widths.len() {
                    1.0 / (self.hidden_widths[layer] as f64).sqrt()
                } else {
                    1.0
                }
            }
        }
    }
}

/// Location of one layer's parameters inside the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    /// Start of the row-major `out_dim × in_dim` weight block.
    pub weight_offset: usize,
    pub out_dim: usize,
    pub in_dim: usize,
    /// Start of the bias vector, absent in the bias-free parametrization.
    pub bias_offset: Option<usize>,
}

/// Flat parameter vector plus the offset table locating each layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub values: Vec<f64>,
    pub layouts: Vec<LayerLayout>,
}

impl ParameterSet {
    /// Zero-valued parameters laid out for `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut layouts = Vec::with_capacity(spec.n_layers());
        let mut offset = 0;
        let biases = spec.has_biases();
        for (fan_in, fan_out) in spec.layer_dims() {
            let weight_offset = offset;
            offset += fan_in * fan_out;
            let bias_offset = if biases {
                let b = offset;
                offset += fan_out;
                Some(b)
            } else {
                None
            };
            layouts.push(LayerLayout {
                weight_offset,
                out_dim: fan_out,
                in_dim: fan_in,
                bias_offset,
            });
        }
        ParameterSet {
            values: vec![0.0; offset],
            layouts,
        }
    }

    /// Total parameter count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when there are no parameters (never the case for a valid spec).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major `out_dim × in_dim` weight block of layer `layer`.
    pub fn weight(&self, layer: usize) -> &[f64] {
        let l = &self.layouts[layer];
        &self.values[l.weight_offset..l.weight_offset + l.out_dim * l.in_dim]
    }

    /// Mutable weight block of layer `layer`.
    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layouts[layer];
        &mut self.values[l.weight_offset..l.weight_offset + l.out_dim * l.in_dim]
    }

    /// Bias vector of layer `layer`, if the parametrization has biases.
    pub fn bias(&self, layer: usize) -> Option<&[f64]> {
        let l = &self.layouts[layer];
        l.bias_offset.map(|b| &self.values[b..b + l.out_dim])
    }
}

/// Draw initial parameters for `spec`, deterministically in `spec.seed`.
///
/// Weights are drawn layer by layer in row-major order; biases (when
/// present) are zero and consume no random draws.
///
/// # Errors
/// Fails when the spec violates its structural invariants.
pub fn init_params(spec: &NetworkSpec) -> Result<ParameterSet> {
    spec.validate()?;
    let mut params = ParameterSet::zeros(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for layer in 0..spec.n_layers() {
        let (fan_in, fan_out) = {
            let l = &params.layouts[layer];
            (l.in_dim, l.out_dim)
        };
        let weights = params.weight_mut(layer);
        match spec.init {
            Init::LecunNormal => {
                let std = (1.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("std is positive and finite");
                for w in weights.iter_mut() {
                    *w = dist.sample(&mut rng);
                }
            }
            Init::XavierUniform => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                for w in weights.iter_mut() {
                    *w = dist.sample(&mut rng);
                }
            }
        }
    }
    Ok(params)
}

/// Per-layer intermediate results of a batch forward pass.
///
/// `activations[0]` is the input batch itself; `activations[l + 1]` is the
/// output of weight layer `l` after its nonlinearity and prefactor, so the
/// final entry holds the logits. `pre_activations[l]` is `W h (+ b)` before
/// the nonlinearity of layer `l`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
}

impl ForwardCache {
    /// The final layer output (logits) of the cached pass.
    pub fn logits(&self) -> &Matrix {
        self.activations.last().expect("cache holds >= 1 layer")
    }
}

/// Run the network on a batch of `d` rows, returning logits (`d × n`) and
/// the full per-layer cache.
///
/// # Errors
/// Fails on a batch-width mismatch or when `params` does not belong to
/// `spec`'s layout.
pub fn forward(spec: &NetworkSpec, params: &ParameterSet, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    spec.validate()?;
    if batch.cols() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            op: "forward",
            left_rows: batch.rows(),
            left_cols: batch.cols(),
            right_rows: spec.input_dim,
            right_cols: spec.output_dim,
        });
    }
    if params.len() != spec.param_count() {
        return Err(Error::InvalidSpec {
            reason: format!(
                "parameter vector length {} does not match spec ({} parameters)",
                params.len(),
                spec.param_count()
            ),
        });
    }
    let n_layers = spec.n_layers();
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(batch.clone());
    for layer in 0..n_layers {
        let pre = linear_layer(
            activations.last().expect("nonempty"),
            params.weight(layer),
            params.bias(layer),
            params.layouts[layer].out_dim,
        );
        let post = if layer + 1 == n_layers {
            // Readout: plain linear logits, no nonlinearity or prefactor.
            pre.clone()
        } else {
            let prefactor = spec.prefactor(layer);
            let mut post = Matrix::zeros(pre.rows(), pre.cols());
            for i in 0..pre.rows() {
                let src = pre.row(i);
                let dst = post.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = spec.activation.apply(*s) * prefactor;
                }
            }
            post
        };
        pre_activations.push(pre);
        activations.push(post);
    }
    let logits = activations.last().expect("nonempty").clone();
    Ok((logits, ForwardCache { pre_activations, activations }))
}

/// `h · Wᵀ (+ b)` for a row-major `out_dim × in_dim` weight slice.
fn linear_layer(h: &Matrix, weights: &[f64], bias: Option<&[f64]>, out_dim: usize) -> Matrix {
    let d = h.rows();
    let in_dim = h.cols();
    let mut out = Matrix::zeros(d, out_dim);
    for i in 0..d {
        let h_row = h.row(i);
        let out_row = out.row_mut(i);
        for o in 0..out_dim {
            let w_row = &weights[o * in_dim..(o + 1) * in_dim];
            let mut acc = match bias {
                Some(b) => b[o],
                None => 0.0,
            };
            for k in 0..in_dim {
                acc += h_row[k] * w_row[k];
            }
            out_row[o] = acc;
        }
    }
    out
}

/// Mean softmax cross-entropy loss and its full parameter gradient on a
/// batch, via one forward and one batched backward pass.
///
/// # Errors
/// Propagates shape errors from the forward pass and the loss.
pub fn loss_gradients(
    spec: &NetworkSpec,
    params: &ParameterSet,
    inputs: &Matrix,
    targets: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    let (logits, cache) = forward(spec, params, inputs)?;
    let (loss, grad_logits) = softmax_cross_entropy(&logits, targets)?;
    let grad = backward_batch(spec, params, &cache, grad_logits);
    Ok((loss, grad))
}

/// Backpropagate a batch of logit gradients to a flat parameter gradient.
fn backward_batch(
    spec: &NetworkSpec,
    params: &ParameterSet,
    cache: &ForwardCache,
    grad_logits: Matrix,
) -> Vec<f64> {
    let n_layers = spec.n_layers();
    let mut grad = vec![0.0; params.len()];
    // delta holds dL/d(pre-activation of layer l), starting at the readout
    // whose "activation" is the identity.
    let mut delta = grad_logits;
    for layer in (0..n_layers).rev() {
        let layout = params.layouts[layer];
        let h_prev = &cache.activations[layer];
        // dL/dW = deltaᵀ · h_prev, written directly into the flat gradient.
        let d = delta.rows();
        for o in 0..layout.out_dim {
            let w_grad =
                &mut grad[layout.weight_offset + o * layout.in_dim..layout.weight_offset + (o + 1) * layout.in_dim];
            for s in 0..d {
                let ds = delta.get(s, o);
                if ds == 0.0 {
                    continue;
                }
                let h_row = h_prev.row(s);
                for (g, h) in w_grad.iter_mut().zip(h_row) {
                    *g += ds * h;
                }
            }
        }
        if let Some(bias_offset) = layout.bias_offset {
            for o in 0..layout.out_dim {
                let mut acc = 0.0;
                for s in 0..d {
                    acc += delta.get(s, o);
                }
                grad[bias_offset + o] = acc;
            }
        }
        if layer == 0 {
            break;
        }
        // dL/dh_prev = delta · W, then gate through the previous layer's
        // nonlinearity (and prefactor, in the bias-free form).
        let weights = params.weight(layer);
        let prev_pre = &cache.pre_activations[layer - 1];
        let prefactor = spec.prefactor(layer - 1);
        let mut next_delta = Matrix::zeros(d, layout.in_dim);
        for s in 0..d {
            let delta_row = delta.row(s);
            let out_row = next_delta.row_mut(s);
            for (o, &ds) in delta_row.iter().enumerate() {
                if ds == 0.0 {
                    continue;
                }
                let w_row = &weights[o * layout.in_dim..(o + 1) * layout.in_dim];
                for (dst, w) in out_row.iter_mut().zip(w_row) {
                    *dst += ds * w;
                }
            }
            let pre_row = prev_pre.row(s);
            for (dst, &pre) in out_row.iter_mut().zip(pre_row) {
                *dst *= spec.activation.derivative(pre) * prefactor;
            }
        }
        delta = next_delta;
    }
    grad
}

/// Per-sample, per-output Jacobian of the network outputs with respect to
/// all parameters.
///
/// Row `i·n + k` holds `∇_θ f_k(x_i)` (samples major, outputs minor), with
/// `n = output_dim`. Computed by one backward pass per output unit per
/// sample; with far more parameters than outputs this is much cheaper than
/// forward-mode differentiation.
///
/// # Errors
/// Fails on an empty batch or propagated shape errors.
pub fn per_sample_jacobian(spec: &NetworkSpec, params: &ParameterSet, batch: &Matrix) -> Result<Matrix> {
    if batch.rows() == 0 {
        return Err(Error::EmptyBatch {
            op: "per_sample_jacobian",
        });
    }
    let (_, cache) = forward(spec, params, batch)?;
    let d = batch.rows();
    let n = spec.output_dim;
    let n_layers = spec.n_layers();
    let mut jacobian = Matrix::zeros(d * n, params.len());
    // Reusable delta buffers, one per layer width.
    let mut deltas: Vec<Vec<f64>> = params
        .layouts
        .iter()
        .map(|l| vec![0.0; l.out_dim])
        .collect();
    for sample in 0..d {
        for k in 0..n {
            // Seed the readout delta with the k-th unit vector.
            let top = &mut deltas[n_layers - 1];
            for v in top.iter_mut() {
                *v = 0.0;
            }
            top[k] = 1.0;
            for layer in (0..n_layers).rev() {
                let layout = params.layouts[layer];
                let row = jacobian.row_mut(sample * n + k);
                let h_prev = cache.activations[layer].row(sample);
                {
                    let delta = &deltas[layer];
                    for (o, &ds) in delta.iter().enumerate() {
                        if ds == 0.0 {
                            continue;
                        }
                        let w_row = &mut row
                            [layout.weight_offset + o * layout.in_dim..layout.weight_offset + (o + 1) * layout.in_dim];
                        for (dst, h) in w_row.iter_mut().zip(h_prev) {
                            *dst = ds * h;
                        }
                    }
                    if let Some(bias_offset) = layout.bias_offset {
                        for (o, &ds) in delta.iter().enumerate() {
                            row[bias_offset + o] = ds;
                        }
                    }
                }
                if layer == 0 {
                    break;
                }
                let weights = params.weight(layer);
                let pre_prev = cache.pre_activations[layer - 1].row(sample);
                let prefactor = spec.prefactor(layer - 1);
                // Split borrow: delta of `layer` read, delta of `layer-1` written.
                let (lower, upper) = deltas.split_at_mut(layer);
                let delta = &upper[0];
                let next_delta = &mut lower[layer - 1];
                for v in next_delta.iter_mut() {
                    *v = 0.0;
                }
                for (o, &ds) in delta.iter().enumerate() {
                    if ds == 0.0 {
                        continue;
                    }
                    let w_row = &weights[o * layout.in_dim..(o + 1) * layout.in_dim];
                    for (dst, w) in next_delta.iter_mut().zip(w_row) {
                        *dst += ds * w;
                    }
                }
                for (dst, &pre) in next_delta.iter_mut().zip(pre_prev) {
                    *dst *= spec.activation.derivative(pre) * prefactor;
                }
            }
        }
    }
    Ok(jacobian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 5,
            hidden_widths: vec![8, 7],
            output_dim: 3,
            activation: Activation::Relu,
            parametrization: Parametrization::Standard,
            init: Init::LecunNormal,
            seed: 42,
        }
    }

    fn random_batch(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_flat(rows, cols, data).unwrap()
    }

    /// Central finite-difference Jacobian, the independent oracle for the
    /// analytic backward pass.
    fn finite_difference_jacobian(spec: &NetworkSpec, params: &ParameterSet, batch: &Matrix, h: f64) -> Matrix {
        let d = batch.rows();
        let n = spec.output_dim;
        let mut jac = Matrix::zeros(d * n, params.len());
        let mut perturbed = params.clone();
        for p in 0..params.len() {
            perturbed.values[p] = params.values[p] + h;
            let (plus, _) = forward(spec, &perturbed, batch).unwrap();
            perturbed.values[p] = params.values[p] - h;
            let (minus, _) = forward(spec, &perturbed, batch).unwrap();
            perturbed.values[p] = params.values[p];
            for i in 0..d {
                for k in 0..n {
                    jac.set(i * n + k, p, (plus.get(i, k) - minus.get(i, k)) / (2.0 * h));
                }
            }
        }
        jac
    }

    fn max_relative_error(actual: &Matrix, oracle: &Matrix) -> f64 {
        assert_eq!(actual.shape(), oracle.shape());
        let scale = oracle.max_abs();
        assert!(scale > 0.0, "oracle is identically zero");
        let mut worst = 0.0_f64;
        for (a, o) in actual.data().iter().zip(oracle.data()) {
            // Entries well below the Jacobian's scale are compared relative
            // to that scale; significant entries relative to themselves.
            let denom = o.abs().max(1e-3 * scale);
            worst = worst.max((a - o).abs() / denom);
        }
        worst
    }

    #[test]
    fn init_lecun_variance_matches_fan_in() {
        let spec = NetworkSpec {
            input_dim: 100,
            hidden_widths: vec![100],
            output_dim: 2,
            activation: Activation::Relu,
            parametrization: Parametrization::Standard,
            init: Init::LecunNormal,
            seed: 7,
        };
        let params = init_params(&spec).unwrap();
        let weights = params.weight(0); // 100×100 = 10^4 draws at fan_in 100
        let mean: f64 = weights.iter().sum::<f64>() / weights.len() as f64;
        let var: f64 =
            weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / weights.len() as f64;
        assert!(
            (0.009..=0.011).contains(&var),
            "empirical variance {var} outside [0.009, 0.011]"
        );
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = small_spec();
        let a = init_params(&spec).unwrap();
        let b = init_params(&spec).unwrap();
        assert_eq!(a, b);
        let different = init_params(&NetworkSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.values, different.values);
    }

    #[test]
    fn init_xavier_respects_bound() {
        let spec = NetworkSpec {
            input_dim: 30,
            hidden_widths: vec![50],
            output_dim: 4,
            activation: Activation::Relu,
            parametrization: Parametrization::Standard,
            init: Init::XavierUniform,
            seed: 9,
        };
        let params = init_params(&spec).unwrap();
        for (layer, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(
                params.weight(layer).iter().all(|w| w.abs() <= bound),
                "layer {layer} exceeds Xavier bound {bound}"
            );
        }
    }

    #[test]
    fn init_biases_are_zero_and_absent_in_bias_free_form() {
        let standard = init_params(&small_spec()).unwrap();
        for layer in 0..3 {
            assert!(standard.bias(layer).unwrap().iter().all(|&b| b == 0.0));
        }
        let bias_free = init_params(&NetworkSpec {
            parametrization: Parametrization::NtkBiasFree,
            ..small_spec()
        })
        .unwrap();
        for layer in 0..3 {
            assert!(bias_free.bias(layer).is_none());
        }
        let spec = small_spec();
        assert_eq!(standard.len(), spec.param_count());
        assert_eq!(bias_free.len(), spec.param_count() - (8 + 7 + 3));
    }

    #[test]
    fn forward_identity_weights_reproduce_affine_map() {
        // Identity activation with identity-block weights: the network is
        // x ↦ x + b₂ after two layers of width equal to the input.
        let spec = NetworkSpec {
            input_dim: 3,
            hidden_widths: vec![3],
            output_dim: 3,
            activation: Activation::Identity,
            parametrization: Parametrization::Standard,
            init: Init::LecunNormal,
            seed: 0,
        };
        let mut params = ParameterSet::zeros(&spec);
        for layer in 0..2 {
            let w = params.weight_mut(layer);
            for i in 0..3 {
                w[i * 3 + i] = 1.0;
            }
        }
        let bias_offset = params.layouts[1].bias_offset.unwrap();
        params.values[bias_offset..bias_offset + 3].copy_from_slice(&[0.5, -1.0, 2.0]);
        let batch = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (logits, cache) = forward(&spec, &params, &batch).unwrap();
        assert_eq!(logits.row(0), &[1.5, 1.0, 5.0]);
        assert_eq!(cache.activations[0], batch);
    }

    #[test]
    fn forward_zero_input_zero_bias_gives_zero_logits() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = Matrix::zeros(4, 5);
        let (logits, _) = forward(&spec, &params, &batch).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = random_batch(3, 6, 5);
        let (a, _) = forward(&spec, &params, &batch).unwrap();
        let (b, _) = forward(&spec, &params, &batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_batch_width() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = Matrix::zeros(4, 6);
        assert!(matches!(
            forward(&spec, &params, &batch),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bias_free_forward_with_scaled_weights_matches_standard() {
        // With identity activation, the bias-free form at width w and
        // weights √w·W equals the standard form with weights W.
        let width = 9;
        let base = NetworkSpec {
            input_dim: 4,
            hidden_widths: vec![width],
            output_dim: 2,
            activation: Activation::Identity,
            parametrization: Parametrization::Standard,
            init: Init::LecunNormal,
            seed: 31,
        };
        let standard_params = init_params(&base).unwrap();
        let ntk_spec = NetworkSpec {
            parametrization: Parametrization::NtkBiasFree,
            ..base.clone()
        };
        let mut ntk_params = ParameterSet::zeros(&ntk_spec);
        let scale = (width as f64).sqrt();
        let scaled: Vec<f64> = standard_params.weight(0).iter().map(|w| w * scale).collect();
        ntk_params.weight_mut(0).copy_from_slice(&scaled);
        ntk_params
            .weight_mut(1)
            .copy_from_slice(standard_params.weight(1));
        let batch = random_batch(5, 6, 4);
        let (standard_out, _) = forward(&base, &standard_params, &batch).unwrap();
        let (ntk_out, _) = forward(&ntk_spec, &ntk_params, &batch).unwrap();
        for (a, b) in standard_out.data().iter().zip(ntk_out.data()) {
            assert!((a - b).abs() <= 1e-12, "outputs differ: {a} vs {b}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = random_batch(17, 6, 5);
        let jac = per_sample_jacobian(&spec, &params, &batch).unwrap();
        let oracle = finite_difference_jacobian(&spec, &params, &batch, 1e-5);
        let err = max_relative_error(&jac, &oracle);
        assert!(err <= 1e-5, "max relative error {err:e} exceeds 1e-5");
    }

    #[test]
    fn jacobian_matches_finite_differences_bias_free() {
        let spec = NetworkSpec {
            parametrization: Parametrization::NtkBiasFree,
            output_dim: 1,
            ..small_spec()
        };
        let params = init_params(&spec).unwrap();
        let batch = random_batch(19, 5, 5);
        let jac = per_sample_jacobian(&spec, &params, &batch).unwrap();
        let oracle = finite_difference_jacobian(&spec, &params, &batch, 1e-5);
        let err = max_relative_error(&jac, &oracle);
        assert!(err <= 1e-5, "max relative error {err:e} exceeds 1e-5");
    }

    #[test]
    fn jacobian_readout_block_of_linear_network_equals_input() {
        // A bias-free identity network with first-layer weights √k·I maps
        // x to itself, so readout-weight gradients reproduce the input.
        let k = 4;
        let spec = NetworkSpec {
            input_dim: k,
            hidden_widths: vec![k],
            output_dim: 1,
            activation: Activation::Identity,
            parametrization: Parametrization::NtkBiasFree,
            init: Init::LecunNormal,
            seed: 0,
        };
        let mut params = ParameterSet::zeros(&spec);
        let scale = (k as f64).sqrt();
        for i in 0..k {
            params.weight_mut(0)[i * k + i] = scale;
        }
        // Readout weights stay zero, so hidden-weight gradients vanish.
        let batch = Matrix::from_rows(&[vec![0.5, -1.5, 2.0, 0.25]]).unwrap();
        let jac = per_sample_jacobian(&spec, &params, &batch).unwrap();
        let readout_offset = params.layouts[1].weight_offset;
        assert_eq!(&jac.row(0)[readout_offset..readout_offset + k], batch.row(0));
        assert!(jac.row(0)[..readout_offset].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_dead_relu_unit_has_zero_columns() {
        let spec = small_spec();
        let mut params = init_params(&spec).unwrap();
        // Drive hidden unit 2 of layer 0 permanently negative via its bias.
        let dead_unit = 2;
        let bias_offset = params.layouts[0].bias_offset.unwrap();
        params.values[bias_offset + dead_unit] = -100.0;
        let batch = random_batch(23, 6, 5);
        let jac = per_sample_jacobian(&spec, &params, &batch).unwrap();
        let layout = params.layouts[0];
        for row in 0..jac.rows() {
            let r = jac.row(row);
            for j in 0..layout.in_dim {
                assert_eq!(r[layout.weight_offset + dead_unit * layout.in_dim + j], 0.0);
            }
            assert_eq!(r[bias_offset + dead_unit], 0.0);
        }
    }

    #[test]
    fn jacobian_vector_product_matches_directional_derivative() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = random_batch(29, 4, 5);
        let jac = per_sample_jacobian(&spec, &params, &batch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut direction: Vec<f64> = (0..params.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in direction.iter_mut() {
            *v /= norm;
        }
        let h = 1e-5;
        let mut plus = params.clone();
        let mut minus = params.clone();
        for p in 0..params.len() {
            plus.values[p] += h * direction[p];
            minus.values[p] -= h * direction[p];
        }
        let (f_plus, _) = forward(&spec, &plus, &batch).unwrap();
        let (f_minus, _) = forward(&spec, &minus, &batch).unwrap();
        let mut scale = 0.0_f64;
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for k in 0..3 {
                let fd = (f_plus.get(i, k) - f_minus.get(i, k)) / (2.0 * h);
                let jv: f64 = jac
                    .row(i * 3 + k)
                    .iter()
                    .zip(&direction)
                    .map(|(j, u)| j * u)
                    .sum();
                scale = scale.max(fd.abs());
                worst = worst.max((fd - jv).abs());
            }
        }
        assert!(worst <= 1e-5 * scale.max(1.0), "JVP error {worst:e}");
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let spec = small_spec();
        let params = init_params(&spec).unwrap();
        let batch = random_batch(37, 6, 5);
        let mut labels = Matrix::zeros(6, 3);
        for i in 0..6 {
            labels.set(i, i % 3, 1.0);
        }
        let (_, grad) = loss_gradients(&spec, &params, &batch, &labels).unwrap();
        let h = 1e-6;
        let mut perturbed = params.clone();
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for p in 0..params.len() {
            perturbed.values[p] = params.values[p] + h;
            let (logits, _) = forward(&spec, &perturbed, &batch).unwrap();
            let (loss_plus, _) = softmax_cross_entropy(&logits, &labels).unwrap();
            perturbed.values[p] = params.values[p] - h;
            let (logits, _) = forward(&spec, &perturbed, &batch).unwrap();
            let (loss_minus, _) = softmax_cross_entropy(&logits, &labels).unwrap();
            perturbed.values[p] = params.values[p];
            let fd = (loss_plus - loss_minus) / (2.0 * h);
            worst = worst.max((fd - grad[p]).abs());
            scale = scale.max(fd.abs());
        }
        assert!(worst <= 1e-6 * scale.max(1.0), "loss gradient error {worst:e}");
    }

    #[test]
    fn spec_validation_rejects_degenerate_shapes() {
        let mut spec = small_spec();
        spec.hidden_widths.clear();
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec { .. })));
        let mut spec = small_spec();
        spec.input_dim = 0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.hidden_widths = vec![4, 0];
        assert!(spec.validate().is_err());
    }
}
