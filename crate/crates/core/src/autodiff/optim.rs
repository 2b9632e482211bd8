use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use super::AutodiffError;

pub trait Optimizer<T: Scalar> {
    /// Updates `params` in place; `grads[i]` belongs to `params[i]`, `None` means zero.
    fn step(&mut self, params: &mut [Arc<Tensor<T>>], grads: &[Option<Tensor<T>>]) -> Result<(), AutodiffError>;
}

fn check_count<T>(params: &[Arc<Tensor<T>>], grads: &[Option<Tensor<T>>]) -> Result<(), AutodiffError> {
    if params.len() != grads.len() {
        return Err(AutodiffError::ParamCount { expected: params.len(), found: grads.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Scalar> Optimizer<T> for Sgd {
    fn step(&mut self, params: &mut [Arc<Tensor<T>>], grads: &[Option<Tensor<T>>]) -> Result<(), AutodiffError> {
        check_count(params, grads)?;
        let lr = T::of(self.lr);
        for (p, g) in params.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            for (w, d) in Arc::make_mut(p).data_mut().iter_mut().zip(g.data()) {
                *w = *w - lr * *d;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

impl<T: Scalar> Optimizer<T> for Adam {
    fn step(&mut self, params: &mut [Arc<Tensor<T>>], grads: &[Option<Tensor<T>>]) -> Result<(), AutodiffError> {
        check_count(params, grads)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, d)) in Arc::make_mut(p).data_mut().iter_mut().zip(g.data()).enumerate() {
                let d = d.as_f64();
                m[j] = beta1 * m[j] + (1.0 - beta1) * d;
                v[j] = beta2 * v[j] + (1.0 - beta2) * d * d;
                let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                *w = T::of(w.as_f64() - update);
            }
        }
        Ok(())
    }
}
