use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{ModelParams, ParamGradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            config: AdamConfig::default(),
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update. Non-finite gradients abort before any tensor is touched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ParamGradients, lr: f64) -> Result<()> {
        for (name, _, data) in grads.tensors() {
            if !data.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let grad_tensors = grads.tensors();
        let moments = self.m.slices_mut().into_iter().zip(self.v.slices_mut());
        for ((p, (m, v)), (_, _, g)) in params.slices_mut().into_iter().zip(moments).zip(grad_tensors) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small() -> (ModelConfig, ModelParams) {
        let mut cfg = ModelConfig::for_dims(3, 2);
        cfg.expand_dim = 4;
        cfg.channels = 2;
        cfg.length = 2;
        cfg.conv_channels = vec![2, 2, 2, 2, 2];
        cfg.repr_dim = 2;
        cfg.proj_hidden_dim = 2;
        cfg.proj_dim = 2;
        let p = ModelParams::init(&cfg).unwrap();
        (cfg, p)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (_, mut p) = small();
        let before = p.clone();
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &before.zeros_like(), 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (_, mut p) = small();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.cls_b[0] = 1.0;
        let mut adam = Adam::new(&p);
        adam.step(&mut p, &g, 0.001).unwrap();
        let delta = p.cls_b[0] - before.cls_b[0];
        // m_hat = 1, v_hat = 1: delta = -lr / (1 + eps)
        assert!((delta + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(p.cls_b[1], before.cls_b[1]);
    }

    #[test]
    fn nan_gradient_is_rejected_by_name() {
        let (_, mut p) = small();
        let mut g = p.zeros_like();
        g.conv_w[2][[0, 0]] = f64::NAN;
        let mut adam = Adam::new(&p);
        let err = adam.step(&mut p, &g, 1e-3).unwrap_err();
        assert!(err.to_string().contains("conv3.weight"));
        assert_eq!(adam.step, 0);
    }
}
