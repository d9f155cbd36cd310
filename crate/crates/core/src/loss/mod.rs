//! JND training objective: magnitude loss, IQA-combination loss, attention
//! loss and their weighted total.

mod magnitude;
mod ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{mse, Planes};

pub use magnitude::{magnitude_loss, magnitude_loss_with_grad, magnitude_term, magnitude_term_grad, DEFAULT_T0};
pub use ssim::{ssim, ssim_with_grad, SsimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IqaMetric {
    Mse,
    /// `1 − ssim`.
    Ssim(SsimConfig),
}

impl IqaMetric {
    pub fn dissimilarity(&self, a: &Planes, b: &Planes) -> Result<f64> {
        match self {
            IqaMetric::Mse => mse(a, b),
            IqaMetric::Ssim(cfg) => Ok(1.0 - ssim(a, b, cfg)?),
        }
    }

    /// Dissimilarity and its gradient with respect to `b`.
    pub fn dissimilarity_with_grad(&self, a: &Planes, b: &Planes) -> Result<(f64, Planes)> {
        match self {
            IqaMetric::Mse => {
                let v = mse(a, b)?;
                let n = a.len() as f64;
                let mut d = b.clone();
                d.data_mut().iter_mut().zip(a.data()).for_each(|(y, x)| *y = 2.0 * (*y - x) / n);
                Ok((v, d))
            }
            IqaMetric::Ssim(cfg) => {
                let (s, mut d) = ssim_with_grad(a, b, cfg)?;
                d.data_mut().iter_mut().for_each(|v| *v = -*v);
                Ok((1.0 - s, d))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqaBank {
    pub metrics: Vec<IqaMetric>,
}

impl Default for IqaBank {
    fn default() -> Self {
        Self {
            metrics: vec![IqaMetric::Mse, IqaMetric::Ssim(SsimConfig::default())],
        }
    }
}

impl IqaBank {
    pub fn evaluate(&self, a: &Planes, b: &Planes) -> Result<Vec<f64>> {
        a.ensure_same_shape(b, "iqa")?;
        self.metrics.iter().map(|m| m.dissimilarity(a, b)).collect()
    }
}

/// Default bank: `[mse, 1 − ssim]`.
pub fn iqa_bank(a: &Planes, b: &Planes) -> Result<Vec<f64>> {
    IqaBank::default().evaluate(a, b)
}

fn check_weights(bank: &IqaBank, weights: &[f64]) -> Result<()> {
    if weights.len() != bank.metrics.len() {
        return Err(Error::Config(format!(
            "{} weights for a bank of {} metrics",
            weights.len(),
            bank.metrics.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Config(format!("IQA weights must be nonnegative, got {w}")));
    }
    Ok(())
}

pub const DEFAULT_AIC_WEIGHTS: [f64; 2] = [0.5, 0.5];

/// Weighted combination of the default bank's dissimilarities.
pub fn aic_loss(a: &Planes, b: &Planes, weights: &[f64]) -> Result<f64> {
    aic_loss_in(&IqaBank::default(), a, b, weights)
}

pub fn aic_loss_in(bank: &IqaBank, a: &Planes, b: &Planes, weights: &[f64]) -> Result<f64> {
    check_weights(bank, weights)?;
    Ok(bank.evaluate(a, b)?.iter().zip(weights).map(|(d, w)| d * w).sum())
}

/// AIC loss and its gradient with respect to `b`.
pub fn aic_loss_with_grad(bank: &IqaBank, a: &Planes, b: &Planes, weights: &[f64]) -> Result<(f64, Planes)> {
    check_weights(bank, weights)?;
    a.ensure_same_shape(b, "iqa")?;
    let mut total = 0.0;
    let mut grad = Planes::zeros(b.channels(), b.height(), b.width());
    for (m, &w) in bank.metrics.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let (v, d) = m.dissimilarity_with_grad(a, b)?;
        total += w * v;
        grad.data_mut().iter_mut().zip(d.data()).for_each(|(g, x)| *g += w * x);
    }
    Ok((total, grad))
}

/// Mean squared difference of two attention maps.
pub fn attention_loss(xc: &Planes, yc: &Planes) -> Result<f64> {
    mse(xc, yc)
}

/// Attention loss and its gradient with respect to `yc`.
pub fn attention_loss_with_grad(xc: &Planes, yc: &Planes) -> Result<(f64, Planes)> {
    IqaMetric::Mse.dissimilarity_with_grad(xc, yc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            gamma: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma].iter().all(|w| *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be nonnegative: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss1: f64,
    pub loss2: f64,
    pub loss3: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn all_finite(&self) -> bool {
        [self.loss1, self.loss2, self.loss3, self.total].iter().all(|v| v.is_finite())
    }
}

pub fn total_loss(parts: (f64, f64, f64), weights: LossWeights) -> LossBreakdown {
    let (loss1, loss2, loss3) = parts;
    LossBreakdown {
        loss1,
        loss2,
        loss3,
        total: weights.alpha * loss1 + weights.beta * loss2 + weights.gamma * loss3,
        weights,
    }
}
