use serde::{Deserialize, Serialize};

use super::layers::Module;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected Adam. Moment buffers follow the module's visitation order
/// and are allocated on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) {
        if self.first.is_empty() {
            module.visit(&mut |p| {
                self.first.push(vec![0.0; p.len()]);
                self.second.push(vec![0.0; p.len()]);
            });
        }
        self.step += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let mut idx = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        module.visit_mut(&mut |p| {
            let m = &mut first[idx];
            let v = &mut second[idx];
            idx += 1;
            let grads = p.grad.data().to_vec();
            for (((w, g), m), v) in p.value.data_mut().iter_mut().zip(&grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        });
    }
}

/// One Adam update on `module`.
pub fn adam_step<M: Module + ?Sized>(module: &mut M, state: &mut AdamState) {
    state.step(module);
}
