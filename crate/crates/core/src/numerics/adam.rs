use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the gradient to this global L2 norm when it is exceeded.
    pub clip_norm: Option<f64>,
    /// Reject non-finite gradients instead of applying them.
    pub checked: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            checked: true,
        }
    }
}

impl AdamConfig {
    /// Default hyperparameters with clipping at 5.0 enabled.
    pub fn with_default_clipping(self) -> Self {
        Self {
            clip_norm: Some(5.0),
            ..self
        }
    }
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let moments: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            first: moments.clone(),
            second: moments,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moment(&self) -> &[Tensor] {
        &self.second
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.tensors().len() != self.first.len() || params.len() != self.first.len() {
            return Err(Error::InvalidOperand {
                op: "adam_step",
                message: format!(
                    "optimizer tracks {} parameters, got {} parameters and {} gradients",
                    self.first.len(),
                    params.len(),
                    grads.tensors().len()
                ),
            });
        }
        for (id, _, p) in params.iter() {
            let g = grads.get(id);
            if p.shape() != g.shape() || p.shape() != self.first[id.index()].shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        if self.config.checked && !grads.is_finite() {
            return Err(Error::NonFinite {
                context: "adam_step gradient".into(),
            });
        }

        let mut factor = 1.0;
        if let Some(max_norm) = self.config.clip_norm {
            let norm = grads.global_norm();
            if norm > max_norm {
                factor = max_norm / norm;
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);

        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id).data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g[k] * factor;
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
