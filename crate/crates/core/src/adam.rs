//! Adam optimizer with bias correction.

use crate::error::{CoreError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Per-parameter first/second moment state plus the step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor2> = params
            .ids()
            .map(|id| {
                let p = params.value(id);
                Tensor2::zeros(p.rows(), p.cols())
            })
            .collect();
        Adam {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over the whole registry. Fails fast on non-finite
    /// gradients.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor2]) -> Result<()> {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count");
        for (id, grad) in params.ids().zip(grads.iter()) {
            if !grad.is_finite() {
                return Err(CoreError::NonFinite(format!(
                    "gradient of {}",
                    params.name(id)
                )));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);

        let ids: Vec<_> = params.ids().collect();
        for (slot, (&id, grad)) in ids.iter().zip(grads.iter()).enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let p = params.value_mut(id);
            for i in 0..grad.data().len() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (1.0 - b1) * g;
                let vi = b2 * v.data()[i] + (1.0 - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                p.data_mut()[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
