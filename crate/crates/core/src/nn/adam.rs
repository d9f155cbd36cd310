use serde::{Deserialize, Serialize};

use super::module::{slices, Module};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments align with [`Module::visit`] order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new<M: Module>(config: AdamConfig, model: &M) -> Self {
        let shapes: Vec<usize> = slices(model).iter().map(|p| p.len()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update at learning rate `lr` (overriding the configured one).
    pub fn update_with_lr<M: Module>(&mut self, model: &mut M, grad: &M, lr: f32) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let grads = slices(grad);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        model.visit_mut(&mut |_, p| {
            let g = grads[i];
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + c.eps);
            }
            i += 1;
        });
    }

    pub fn update<M: Module>(&mut self, model: &mut M, grad: &M) {
        let lr = self.config.lr;
        self.update_with_lr(model, grad, lr);
    }
}
