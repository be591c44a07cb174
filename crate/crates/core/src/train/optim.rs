use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
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
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::Config("adam needs lr > 0 and betas in [0, 1)".into()));
        }
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.grad.len()]).collect();
        Ok(AdamState {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    /// One bias-corrected update from the accumulated gradients. Frozen
    /// parameters are left alone.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Contract(
                "optimizer state does not match the parameter store".into(),
            ));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let values = p.tensor.data_mut();
            for i in 0..values.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// L2 norm over every gradient buffer.
pub fn global_norm<'a, I: IntoIterator<Item = &'a [f64]>>(grads: I) -> f64 {
    grads
        .into_iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients by `threshold / norm` when their global norm
/// exceeds `threshold`. Returns the factor applied (1 when unchanged).
pub fn clip_global_norm(grads: &mut [&mut [f64]], threshold: f64) -> f64 {
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm <= threshold || norm == 0.0 {
        return 1.0;
    }
    let scale = threshold / norm;
    for g in grads.iter_mut() {
        g.iter_mut().for_each(|x| *x *= scale);
    }
    scale
}

/// [`clip_global_norm`] over the accumulated gradients of a store.
pub fn clip_store_grads(store: &mut ParamStore, threshold: f64) -> f64 {
    let mut bufs: Vec<&mut [f64]> = store.iter_mut().map(|p| p.grad.as_mut_slice()).collect();
    clip_global_norm(&mut bufs, threshold)
}
