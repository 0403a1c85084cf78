use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
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

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Bias-corrected Adam with moment buffers for exactly the trainable set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn tracked(&self) -> impl Iterator<Item = &str> {
        self.moments.keys().map(String::as_str)
    }

    /// One update of every trainable parameter; gradients are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParameterStore) -> Result<()> {
        let trainable: Vec<String> = store.trainable().iter().cloned().collect();
        for name in &trainable {
            if store.get(name)?.grad().is_none() {
                return Err(Error::MissingGradient(name.clone()));
            }
        }
        self.moments.retain(|k, _| store.is_trainable(k));

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for name in &trainable {
            let param = store.get_mut(name)?;
            let n = param.numel();
            let mom = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let grad = param.grad.take().expect("checked above");
            let data = param.data_mut();
            for i in 0..n {
                let g = grad[i];
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            let mut grad = grad;
            grad.fill(0.0);
            param.grad = Some(grad);
        }
        // Frozen parameters may have picked up gradients; drop them without touching values.
        store.clear_frozen_grads();
        Ok(())
    }
}
