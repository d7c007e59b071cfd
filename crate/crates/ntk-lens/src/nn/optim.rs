//! Full-batch first-order optimizers: Adam and SGD with heavy-ball momentum.

/// Adam state: first/second moment estimates and the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Fresh state with the standard hyperparameters
    /// (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub fn new(dim: usize) -> Self {
        Self::with_hyperparameters(dim, 0.9, 0.999, 1e-8)
    }

    /// Fresh state with explicit hyperparameters.
    pub fn with_hyperparameters(dim: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One bias-corrected Adam update applied in place.
    ///
    /// Panics if `params` and `grads` do not match the state dimension.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter dimension mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient dimension mismatch");
        self.step += 1;
        let correction1 = 1.0 - self.beta1.powi(self.step as i32);
        let correction2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / correction1;
            let v_hat = self.v[i] / correction2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Heavy-ball momentum state: `v ← μv + g; θ ← θ − lr·v`.
#[derive(Clone, Debug)]
pub struct SgdMomentumState {
    velocity: Vec<f64>,
    momentum: f64,
}

impl SgdMomentumState {
    /// Fresh zero-velocity state with momentum coefficient `momentum`.
    pub fn new(dim: usize, momentum: f64) -> Self {
        SgdMomentumState {
            velocity: vec![0.0; dim],
            momentum,
        }
    }

    /// One momentum update applied in place.
    ///
    /// Panics if `params` and `grads` do not match the state dimension.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.velocity.len(), "parameter dimension mismatch");
        assert_eq!(grads.len(), self.velocity.len(), "gradient dimension mismatch");
        for i in 0..params.len() {
            self.velocity[i] = self.momentum * self.velocity[i] + grads[i];
            params[i] -= lr * self.velocity[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_has_closed_form() {
        // At step 1 the bias corrections cancel and the update is
        // −lr·g/(|g| + ε) per coordinate.
        let mut state = AdamState::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.3, -0.8, 0.0001];
        let lr = 0.01;
        state.step(&mut params, &grads, lr);
        for (i, (&p, &g)) in params.iter().zip(&grads).enumerate() {
            let expected = [1.0, -2.0, 0.5][i] - lr * g / (g.abs() + 1e-8);
            assert!(
                (p - expected).abs() <= 1e-12,
                "coord {i}: {p} vs closed form {expected}"
            );
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(2);
        let mut params = vec![3.0, -4.0];
        for _ in 0..10 {
            state.step(&mut params, &[0.0, 0.0], 0.1);
        }
        assert_eq!(params, vec![3.0, -4.0]);
    }

    #[test]
    fn adam_reduces_quadratic_bowl_loss() {
        // Minimize ½‖θ‖² from a fixed start; gradient is θ itself.
        let mut state = AdamState::new(4);
        let mut params = vec![2.0, -1.5, 0.7, -3.0];
        let initial: f64 = params.iter().map(|p| 0.5 * p * p).sum();
        for _ in 0..200 {
            let grads = params.clone();
            state.step(&mut params, &grads, 0.1);
        }
        let final_loss: f64 = params.iter().map(|p| 0.5 * p * p).sum();
        assert!(
            final_loss < initial,
            "loss did not decrease: {initial} -> {final_loss}"
        );
        assert!(final_loss < 1e-2, "bowl loss after 200 steps: {final_loss}");
    }

    #[test]
    fn sgd_without_momentum_is_plain_gradient_descent() {
        let mut state = SgdMomentumState::new(2, 0.0);
        let mut params = vec![1.0, -1.0];
        state.step(&mut params, &[0.5, -0.25], 0.1);
        assert_eq!(params, vec![1.0 - 0.1 * 0.5, -1.0 + 0.1 * 0.25]);
    }

    #[test]
    fn sgd_constant_gradient_velocity_approaches_geometric_limit() {
        // v_t = g·(1 − μ^t)/(1 − μ) for constant gradient g.
        let mu = 0.9;
        let g = 2.0;
        let mut state = SgdMomentumState::new(1, mu);
        let mut params = vec![0.0];
        let steps = 50;
        for _ in 0..steps {
            state.step(&mut params, &[g], 0.0);
        }
        let expected = g * (1.0 - mu.powi(steps)) / (1.0 - mu);
        assert!(
            (state.velocity[0] - expected).abs() <= 1e-10,
            "velocity {} vs geometric series {expected}",
            state.velocity[0]
        );
    }

    #[test]
    fn sgd_quadratic_bowl_matches_scalar_recurrence() {
        // Independent scalar oracle of the same recurrence, step by step.
        let mu = 0.9;
        let lr = 0.05;
        let mut state = SgdMomentumState::new(1, mu);
        let mut params = vec![1.7];
        let mut theta = 1.7;
        let mut v = 0.0;
        for _ in 0..100 {
            let grads = params.clone();
            state.step(&mut params, &grads, lr);
            v = mu * v + theta;
            theta -= lr * v;
            assert!(
                (params[0] - theta).abs() <= 1e-10,
                "trajectory diverged from recurrence: {} vs {theta}",
                params[0]
            );
        }
    }
}
