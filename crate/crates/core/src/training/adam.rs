use serde::{Deserialize, Serialize};
use udfe_nn::{ParamGrads, ParamKind, ParamStore, Tensor};

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
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every entry of one parameter store, in store order.
/// Buffers keep zero moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore<f32>) -> Self {
        let zeros = || {
            store
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.tensor.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, store: &mut ParamStore<f32>, grads: &ParamGrads<f32>) -> Result<()> {
        if self.m.len() != store.len() || grads.grads.len() != store.len() {
            return Err(Error::Invalid("optimizer state does not match parameter store".into()));
        }
        for (entry, g) in store.entries().iter().zip(&grads.grads) {
            if let Some(g) = g {
                if g.shape() != entry.tensor.shape() {
                    return Err(Error::Invalid(format!("gradient shape mismatch for `{}`", entry.name)));
                }
                if !g.all_finite() {
                    return Err(Error::Numerical(format!("non-finite gradient for `{}`", entry.name)));
                }
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            if store.entry(id).kind != ParamKind::Trainable {
                continue;
            }
            let Some(g) = &grads.grads[i] else { continue };
            let p = store.get_mut(id).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j] as f64;
                let mj = beta1 * m[j] as f64 + (1.0 - beta1) * gj;
                let vj = beta2 * v[j] as f64 + (1.0 - beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + eps);
                p[j] = (p[j] as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
