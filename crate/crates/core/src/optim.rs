//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters. Only the learning rate is model-specific; the decay
/// rates and epsilon use the standard defaults.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(1e-4)
    }
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    m: Vec<S>,
    v: Vec<S>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update. Increments the step counter by exactly 1.
    pub fn step(&mut self, params: &mut [S], grads: &[S]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dimension(
                "adam_step",
                format!("{} values", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.t += 1;
        let beta1 = S::from_f64(self.config.beta1);
        let beta2 = S::from_f64(self.config.beta2);
        let lr = S::from_f64(self.config.lr);
        let eps = S::from_f64(self.config.eps);
        let one = S::one();
        let bc1 = one - beta1.powi(self.t as i32);
        let bc2 = one - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (one - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (one - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::with_lr(0.1));
        let mut params = vec![1.0f64, -2.0, 0.5];
        let before = params.clone();
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    // At t=1 the bias-corrected ratio m_hat/sqrt(v_hat) equals g/|g|, so the
    // first step moves each parameter by ~ -lr*sign(g).
    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 0.01;
        let mut state = AdamState::new(3, AdamConfig::with_lr(lr));
        let mut params = vec![0.0f64; 3];
        let grads = [5.0, -0.003, 1234.0];
        state.step(&mut params, &grads).unwrap();
        for (p, g) in params.iter().zip(grads.iter()) {
            let want = -lr * g.signum();
            assert!(
                (p - want).abs() < lr * 1e-4,
                "param {p} expected ~{want} for grad {g}"
            );
        }
    }

    #[test]
    fn identical_gradient_histories_update_identically() {
        let cfg = AdamConfig::with_lr(0.05);
        let mut a = AdamState::new(1, cfg);
        let mut b = AdamState::new(1, cfg);
        let mut pa = vec![0.7f32];
        let mut pb = vec![0.7f32];
        for g in [0.3f32, -1.2, 0.0, 4.5, -0.1] {
            a.step(&mut pa, &[g]).unwrap();
            b.step(&mut pb, &[g]).unwrap();
            assert_eq!(pa[0].to_bits(), pb[0].to_bits());
        }
        assert_eq!(a.step_count(), 5);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut state = AdamState::<f64>::new(2, AdamConfig::default());
        let mut params = vec![0.0; 3];
        assert!(state.step(&mut params, &[0.0, 0.0, 0.0]).is_err());
    }

    // Hand-evaluated two-step Adam trace.
    #[test]
    fn two_step_trace_matches_hand_evaluation() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut state = AdamState::new(1, cfg);
        let mut p = vec![1.0f64];

        // Step 1, g = 2: m=0.2, v=0.004, m_hat=2, v_hat=4, step = lr*2/(2+eps).
        state.step(&mut p, &[2.0]).unwrap();
        let expect1 = 1.0 - 0.1 * 2.0 / (4.0f64.sqrt() + 1e-8);
        assert!((p[0] - expect1).abs() < 1e-15);

        // Step 2, g = -1.
        let m = 0.9 * 0.2 - 0.1;
        let v = 0.999 * 0.004 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.9f64.powi(2));
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        state.step(&mut p, &[-1.0]).unwrap();
        let expect2 = expect1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expect2).abs() < 1e-15);
    }
}
