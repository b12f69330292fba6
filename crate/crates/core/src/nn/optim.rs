use serde::{Deserialize, Serialize};

use super::{Grads, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = store.tensors().iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Adam { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one bias-corrected update with learning rate `lr`.
    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one, eps) = (T::one(), T::lit(eps));
        let step_size = T::lit(lr / bc1);
        let bc2 = T::lit(bc2);
        for (t, tensor) in store.tensors_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[t], &mut self.v[t], &grads.0[t]);
            for i in 0..tensor.data.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let denom = (v[i] / bc2).sqrt() + eps;
                tensor.data[i] -= step_size * m[i] / denom;
            }
        }
    }
}

/// Cosine annealing with warm restarts of a fixed period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineWarmRestarts {
    pub base_lr: f64,
    pub min_lr: f64,
    pub period: u64,
}

impl Default for CosineWarmRestarts {
    fn default() -> Self {
        CosineWarmRestarts { base_lr: 5e-4, min_lr: 0.0, period: 32 }
    }
}

impl CosineWarmRestarts {
    /// Learning rate for optimizer step `step` (0-based).
    pub fn lr(&self, step: u64) -> f64 {
        let t = (step % self.period.max(1)) as f64 / self.period.max(1) as f64;
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}
