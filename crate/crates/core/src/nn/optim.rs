use serde::{Deserialize, Serialize};

use super::layers::Trainable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to a list of `(value, grad)` slices.
    pub fn update(&mut self, params: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|(v, _)| (vec![0.0; v.len()], vec![0.0; v.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::shape("adam", self.moments.len(), params.len()));
        }
        for ((v, g), (m, _)) in params.iter().zip(&self.moments) {
            if v.len() != g.len() || v.len() != m.len() {
                return Err(Error::shape("adam", m.len(), g.len()));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for ((value, grad), (m, s)) in params.iter_mut().zip(self.moments.iter_mut()) {
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                s[i] = beta2 * s[i] + (1.0 - beta2) * g * g;
                let mhat = m[i] / bc1;
                let shat = s[i] / bc2;
                value[i] -= lr * mhat / (shat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Steps every parameter of `model` and clears its gradients.
    pub fn step<M: Trainable + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        let mut params = model.params_mut();
        let mut pairs: Vec<(&mut [f64], &[f64])> = params
            .iter_mut()
            .map(|p| (&mut *p.value, &*p.grad))
            .collect();
        self.update(&mut pairs)?;
        drop(pairs);
        for p in params {
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut v = vec![1.0, -2.0];
        let g = vec![0.0, 0.0];
        for _ in 0..5 {
            adam.update(&mut [(&mut v, &g)]).unwrap();
        }
        assert_eq!(v, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // t=1: mhat = g, shat = g^2, update = lr * g / (|g| + eps)
        let mut adam = Adam::new(AdamConfig::default());
        let mut v = vec![0.0];
        adam.update(&mut [(&mut v, &[1.0])]).unwrap();
        let expected = 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((v[0] + expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut v = vec![0.0, 1.0];
        assert!(adam.update(&mut [(&mut v, &[1.0])]).is_err());
    }
}
