//! Offline rate–distortion training of the codec.
//!
//! Objective per crop: `bpp + λ · 255² · MSE(x, x̂)` with additive-noise
//! quantization, so large `λ` makes fidelity dominate.

use log::info;
use serde::{Deserialize, Serialize};

use super::model::{CodecModel, QuantMode};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imaging::{mse, psnr_from_mse, ImageTensor};
use crate::nn::module::{add_into, scale, zeros_like};
use crate::nn::{Adam, AdamConfig, Tensor};
use crate::pipeline::dataset::{derive_seed, sample_crops};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub crop: usize,
    pub lr: f32,
    /// Learning rate reached at the last step under cosine decay.
    pub lr_final: f32,
    /// Distortion weight λ in `rate + λ·distortion`.
    pub lambda: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 1,
            crop: 176,
            lr: 3e-4,
            lr_final: 1e-5,
            lambda: 2000.0,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl CodecTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.crop.is_multiple_of(super::DOWNSAMPLE) || self.crop < crate::imaging::MIN_SIDE {
            return Err(Error::Config(format!(
                "crop {} must be a multiple of 8 and at least 16",
                self.crop
            )));
        }
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::Config("batch and steps must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::Config("lambda must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f32 {
        if self.steps <= 1 {
            return self.lr;
        }
        let t = step as f32 / (self.steps - 1) as f32;
        let cos = 0.5 * (1.0 + (std::f32::consts::PI * t).cos());
        self.lr_final + (self.lr - self.lr_final) * cos
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecTraceRow {
    pub step: usize,
    pub rate_bpp: f64,
    pub mse: f64,
    pub psnr: f64,
    pub loss: f64,
    pub floored: usize,
    pub min_gdn_denominator: f32,
}

pub struct SampleResult {
    pub grad: CodecModel,
    pub bpp: f64,
    pub mse: f64,
    pub loss: f64,
    pub floored: usize,
    pub min_denominator: f32,
}

/// Loss and parameter gradient for one crop in train mode.
pub fn sample_gradient(model: &CodecModel, x: &ImageTensor, lambda: f64, noise_seed: u64) -> Result<SampleResult> {
    let xt = Tensor::from(x.planes());
    let tr = model.degrade_trace(&xt, QuantMode::Train { seed: noise_seed })?;
    let mut grad = zeros_like(model);
    let pixels = (x.height() * x.width()) as f64;
    let n = xt.len() as f64;

    let dist = mse(tr.raw_output.to_planes(), x.planes())?;
    let dscale = (lambda * 255.0 * 255.0 * 2.0 / n) as f32;
    let mut d_out = tr.raw_output.clone();
    for (d, t) in d_out.data.iter_mut().zip(&xt.data) {
        *d = (*d - t) * dscale;
    }
    let mut d_latent = model.latent_gradient(&tr, &d_out, false, Some(&mut grad));

    let q = &tr.quantized;
    let per = q.spatial();
    let mut bits = 0.0;
    let mut floored = 0;
    for c in 0..q.channels {
        for i in c * per..(c + 1) * per {
            let (b, dv, fl) = model.density.bits_with_grad(c, q.data[i], 1.0 / pixels, Some(&mut grad.density));
            bits += b;
            floored += fl as usize;
            d_latent.data[i] += dv as f32;
        }
    }
    let bpp = bits / pixels;
    let _ = model.input_gradient(&tr, &d_latent, false, Some(&mut grad));
    let loss = bpp + lambda * 255.0 * 255.0 * dist;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            layer: 0,
            detail: format!("non-finite loss {loss}"),
        });
    }
    let min_denominator = tr.analysis.min_gdn_denominator().min(tr.synthesis.min_gdn_denominator());
    Ok(SampleResult {
        grad,
        bpp,
        mse: dist,
        loss,
        floored,
        min_denominator,
    })
}

/// Mutable training run state; resumable from a checkpoint.
pub struct CodecTrainer {
    pub config: CodecTrainConfig,
    pub model: CodecModel,
    pub optimizer: Adam,
    pub trace: Vec<CodecTraceRow>,
}

impl CodecTrainer {
    pub fn new(config: CodecTrainConfig, model: CodecModel) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &model,
        );
        Ok(Self {
            config,
            model,
            optimizer,
            trace: Vec::new(),
        })
    }

    pub fn next_step(&self) -> usize {
        self.optimizer.step as usize
    }

    /// One optimizer step on a freshly sampled batch.
    pub fn step(&mut self, images: &[ImageTensor]) -> Result<CodecTraceRow> {
        let step = self.next_step();
        let cfg = &self.config;
        let crops = sample_crops(images, cfg.crop, cfg.batch, derive_seed(cfg.seed, &[1, step as u64]));
        let mut acc = zeros_like(&self.model);
        let mut stats = (0.0, 0.0, 0.0, 0usize, f32::INFINITY);
        let model = &self.model;
        let mut failure = None;
        cfg.execution.map_fold(
            crops.len(),
            &mut (&mut acc, &mut stats, &mut failure),
            |i| sample_gradient(model, &crops[i], cfg.lambda, derive_seed(cfg.seed, &[2, step as u64, i as u64])),
            |(acc, stats, failure), r| match r {
                Ok(s) => {
                    add_into(&mut **acc, &s.grad);
                    stats.0 += s.bpp;
                    stats.1 += s.mse;
                    stats.2 += s.loss;
                    stats.3 += s.floored;
                    stats.4 = stats.4.min(s.min_denominator);
                }
                Err(e) => {
                    if failure.is_none() {
                        **failure = Some(e);
                    }
                }
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let b = crops.len() as f64;
        scale(&mut acc, 1.0 / b as f32);
        let lr = cfg.lr_at(step);
        self.optimizer.update_with_lr(&mut self.model, &acc, lr);
        self.model.project();
        self.model.state.steps = self.optimizer.step;
        let mse = stats.1 / b;
        let row = CodecTraceRow {
            step: step + 1,
            rate_bpp: stats.0 / b,
            mse,
            psnr: psnr_from_mse(mse).unwrap_or(f64::INFINITY),
            loss: stats.2 / b,
            floored: stats.3,
            min_gdn_denominator: stats.4,
        };
        let prev = self.model.state.min_gdn_denominator.unwrap_or(f32::INFINITY);
        self.model.state.min_gdn_denominator = Some(prev.min(stats.4));
        self.trace.push(row);
        Ok(row)
    }

    /// Marks the model trained and records its eval-mode fidelity.
    pub fn finish(&mut self, fidelity_set: &[ImageTensor]) -> Result<f64> {
        let psnr = mean_eval_psnr(&self.model, fidelity_set, self.config.execution)?;
        self.model.state.trained = true;
        self.model.state.fidelity_psnr = Some(psnr);
        info!("codec fidelity {psnr:.2} dB after {} steps", self.model.state.steps);
        Ok(psnr)
    }
}

/// Mean per-image eval-mode reconstruction PSNR.
pub fn mean_eval_psnr(model: &CodecModel, images: &[ImageTensor], exec: Execution) -> Result<f64> {
    let psnrs = eval_psnrs(model, images, exec)?;
    Ok(psnrs.iter().sum::<f64>() / psnrs.len().max(1) as f64)
}

pub fn eval_psnrs(model: &CodecModel, images: &[ImageTensor], exec: Execution) -> Result<Vec<f64>> {
    exec.map(images, |img| {
        let out = model.degrade(img, QuantMode::Eval)?;
        Ok(psnr_from_mse(mse(&out, img)?).unwrap_or(f64::INFINITY))
    })
    .into_iter()
    .collect()
}

/// Trains from scratch for `config.steps` steps, calling `on_step` after each.
pub fn train_codec(
    images: &[ImageTensor],
    config: &CodecTrainConfig,
    arch: super::CodecArch,
    mut on_step: impl FnMut(&CodecTrainer, &CodecTraceRow) -> Result<()>,
) -> Result<CodecTrainer> {
    if images.is_empty() {
        return Err(Error::Ingest("empty training set".into()));
    }
    let model = CodecModel::new(arch, derive_seed(config.seed, &[0]));
    let mut trainer = CodecTrainer::new(config.clone(), model)?;
    while trainer.next_step() < config.steps {
        let row = trainer.step(images)?;
        on_step(&trainer, &row)?;
    }
    trainer.finish(images)?;
    Ok(trainer)
}
