//! Generalized divisive normalization.
//!
//! Forward: `y_i = x_i / sqrt(β_i + Σ_j γ_ij x_j²)`; the inverse variant
//! multiplies by the same root. `β` is kept at or above [`BETA_FLOOR`] and
//! `γ` non-negative by [`Gdn::project`], so the root never vanishes.

use super::module::Module;
use super::ops::gemm;
use super::tensor::Tensor;

pub const BETA_FLOOR: f32 = 1e-6;

#[derive(Clone, Debug)]
pub struct Gdn {
    pub channels: usize,
    pub inverse: bool,
    pub beta: Vec<f32>,
    /// `channels × channels`, row `i` holds `γ_i·`.
    pub gamma: Vec<f32>,
}

pub struct GdnCache {
    input: Tensor,
    norm: Vec<f32>,
}

impl GdnCache {
    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input.shape()
    }

    /// Smallest `sqrt(β + Σγx²)` seen in the forward pass.
    pub fn min_denominator(&self) -> f32 {
        self.norm.iter().fold(f32::INFINITY, |m, &n| m.min(n)).sqrt()
    }
}

impl Gdn {
    pub fn new(channels: usize, inverse: bool) -> Self {
        let mut gamma = vec![0.0; channels * channels];
        for i in 0..channels {
            gamma[i * channels + i] = 0.1;
        }
        Self {
            channels,
            inverse,
            beta: vec![1.0; channels],
            gamma,
        }
    }

    /// Restores parameter constraints after an optimizer step.
    pub fn project(&mut self) {
        for b in &mut self.beta {
            *b = b.max(BETA_FLOOR);
        }
        for g in &mut self.gamma {
            *g = g.max(0.0);
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, GdnCache) {
        assert_eq!(x.channels, self.channels, "gdn channels");
        let p = x.spatial();
        let sq: Vec<f32> = x.data.iter().map(|v| v * v).collect();
        let mut norm = vec![0.0; self.channels * p];
        for (c, b) in self.beta.iter().enumerate() {
            norm[c * p..(c + 1) * p].fill(*b);
        }
        gemm(self.channels, self.channels, p, &self.gamma, false, &sq, false, 1.0, &mut norm);
        let mut y = x.clone();
        if self.inverse {
            for (v, n) in y.data.iter_mut().zip(&norm) {
                *v *= n.sqrt();
            }
        } else {
            for (v, n) in y.data.iter_mut().zip(&norm) {
                *v /= n.sqrt();
            }
        }
        (y, GdnCache { input: x.clone(), norm })
    }

    pub fn backward(&self, cache: &GdnCache, dy: &Tensor, grad: Option<&mut Gdn>) -> Tensor {
        let x = &cache.input;
        assert_eq!(dy.shape(), x.shape(), "gdn dy shape");
        let p = x.spatial();
        // g = ∂L/∂norm, elementwise.
        let mut g = vec![0.0f32; dy.len()];
        let mut dx = dy.clone();
        #[allow(clippy::needless_range_loop)]
        for i in 0..dy.len() {
            let n = cache.norm[i];
            let r = n.sqrt();
            if self.inverse {
                g[i] = dy.data[i] * x.data[i] * 0.5 / r;
                dx.data[i] *= r;
            } else {
                g[i] = -0.5 * dy.data[i] * x.data[i] / (n * r);
                dx.data[i] /= r;
            }
        }
        if let Some(grad) = grad {
            let sq: Vec<f32> = x.data.iter().map(|v| v * v).collect();
            gemm(self.channels, p, self.channels, &g, false, &sq, true, 1.0, &mut grad.gamma);
            for c in 0..self.channels {
                grad.beta[c] += g[c * p..(c + 1) * p].iter().sum::<f32>();
            }
        }
        let mut back = vec![0.0; dy.len()];
        gemm(self.channels, self.channels, p, &self.gamma, true, &g, false, 0.0, &mut back);
        for ((d, b), xv) in dx.data.iter_mut().zip(&back).zip(&x.data) {
            *d += 2.0 * xv * b;
        }
        dx
    }
}

impl Module for Gdn {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        f("beta", &self.beta);
        f("gamma", &self.gamma);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        f("beta", &mut self.beta);
        f("gamma", &mut self.gamma);
    }
}
