//! JND generator training against the frozen codec.

use serde::{Deserialize, Serialize};

use super::model::{generator_input, GeneratorModel};
use crate::codec::CodecModel;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gradcam::{cam_trace, PriorMaps};
use crate::imaging::{spatial_gradient_with, GradientMode, ImageTensor, Planes};
use crate::loss::{
    aic_loss_with_grad, attention_loss_with_grad, magnitude_loss_with_grad, total_loss, IqaBank, LossBreakdown,
    LossWeights, DEFAULT_AIC_WEIGHTS, DEFAULT_T0,
};
use crate::nn::module::{add_into, content_hash, scale, slices, zeros_like};
use crate::nn::{Adam, AdamConfig, Tensor};
use crate::pipeline::dataset::{derive_seed, sample_crop_specs, CropSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Loss2 compares the signal-domain pair `(x0, y0)` instead of `(x2, y2)`.
    BlP,
    /// Generator priors come from external attention/contrast maps.
    BlCam,
    /// Loss3 is dropped from the objective (still computed and logged).
    BlL3,
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "bl-p" => Ok(Self::BlP),
            "bl-cam" => Ok(Self::BlCam),
            "bl-l3" => Ok(Self::BlL3),
            _ => Err(Error::Config(format!("unknown ablation `{s}` (bl-p, bl-cam, bl-l3)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JndTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub crop: usize,
    pub lr: f32,
    pub weights: LossWeights,
    pub t0: f64,
    pub aic_weights: Vec<f64>,
    pub gradient_mode: GradientMode,
    pub ablation: Ablation,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for JndTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch: 32,
            crop: 176,
            lr: 1e-5,
            weights: LossWeights::default(),
            t0: DEFAULT_T0,
            aic_weights: DEFAULT_AIC_WEIGHTS.to_vec(),
            gradient_mode: GradientMode::default(),
            ablation: Ablation::None,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl JndTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::Config("batch and steps must be positive".into()));
        }
        if self.crop < crate::imaging::MIN_SIDE {
            return Err(Error::Config(format!("crop {} below 16", self.crop)));
        }
        if !(self.t0 > 0.0) || !(self.lr > 0.0) {
            return Err(Error::Config("t0 and lr must be positive".into()));
        }
        Ok(())
    }

    /// Objective weights after the ablation switch.
    pub fn effective_weights(&self) -> LossWeights {
        match self.ablation {
            Ablation::BlL3 => LossWeights {
                gamma: 0.0,
                ..self.weights
            },
            _ => self.weights,
        }
    }
}

/// User-supplied attention (one channel) and contrast (one channel) maps
/// aligned with a training image, used by the BL-CAM ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalPrior {
    pub attention: Planes,
    pub contrast: Planes,
}

impl ExternalPrior {
    pub fn crop(&self, s: &CropSpec, side: usize) -> Result<ExternalPrior> {
        Ok(Self {
            attention: self.attention.crop(s.top, s.left, side, side)?,
            contrast: self.contrast.crop(s.top, s.left, side, side)?,
        })
    }

    /// Maps the external pair onto the prior slots: attention, min–max
    /// normalized, as the CAM; contrast replicated over 3 channels as the
    /// guided map.
    pub fn to_priors(&self, target_scalar: f64) -> Result<PriorMaps> {
        let a = &self.attention;
        let (lo, hi) = a.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let cam = if hi > lo { a.map(|v| (v - lo) / (hi - lo)) } else { a.map(|_| 0.0) };
        let c = &self.contrast;
        let guided = Planes::from_fn(3, c.height(), c.width(), |_, y, x| c.get(0, y, x));
        Ok(PriorMaps {
            cam,
            guided,
            target_scalar,
        })
    }
}

pub struct SampleOutcome {
    pub grad: GeneratorModel,
    pub losses: LossBreakdown,
}

fn to_tensor(p: &Planes) -> Tensor {
    Tensor::from(p)
}

/// Loss breakdown and generator gradient for one crop.
pub fn sample_step(
    codec: &CodecModel,
    generator: &GeneratorModel,
    x0: &ImageTensor,
    external: Option<&ExternalPrior>,
    cfg: &JndTrainConfig,
    bank: &IqaBank,
) -> Result<SampleOutcome> {
    let weights = cfg.effective_weights();
    let xcam = cam_trace(codec, x0)?;
    let priors = match (cfg.ablation, external) {
        (Ablation::BlCam, Some(e)) => e.to_priors(xcam.target_scalar)?,
        (Ablation::BlCam, None) => return Err(Error::Config("bl-cam needs external prior maps".into())),
        _ => PriorMaps {
            guided: xcam.guided(codec, x0)?,
            cam: xcam.cam.clone(),
            target_scalar: xcam.target_scalar,
        },
    };
    let gtr = generator.forward_trace(&generator_input(x0, &priors)?)?;
    let xj = gtr.output.to_planes();

    let mut y0p = x0.planes().clone();
    y0p.data_mut().iter_mut().zip(xj.data()).for_each(|(a, b)| *a += b);
    let inside: Vec<bool> = y0p.data().iter().map(|v| (0.0..=1.0).contains(v)).collect();
    let y0 = ImageTensor::clipped(y0p);

    let grad_field = spatial_gradient_with(x0, cfg.gradient_mode);
    let (l1, d_xj1) = magnitude_loss_with_grad(&xj, &grad_field, cfg.t0)?;

    let ycam = cam_trace(codec, &y0)?;
    let (l3, d_yc) = attention_loss_with_grad(&xcam.cam, &ycam.cam)?;

    let mut d_y0 = Planes::zeros(3, x0.height(), x0.width());
    let l2;
    let mut d_latent: Option<Tensor> = None;
    if cfg.ablation == Ablation::BlP {
        let (v, d) = aic_loss_with_grad(bank, x0.planes(), y0.planes(), &cfg.aic_weights)?;
        l2 = v;
        d_y0.data_mut().iter_mut().zip(d.data()).for_each(|(o, g)| *o += weights.beta * g);
    } else {
        let x2 = xcam.degrade.output.to_planes();
        let y2 = ycam.degrade.output.to_planes();
        let (v, d) = aic_loss_with_grad(bank, &x2, &y2, &cfg.aic_weights)?;
        l2 = v;
        let mut d_out = to_tensor(&d);
        d_out.scale(weights.beta as f32);
        ycam.degrade.mask_clipped(&mut d_out);
        d_latent = Some(codec.latent_gradient(&ycam.degrade, &d_out, false, None));
    }
    if weights.gamma > 0.0 {
        let mut d_a = ycam.backward_to_latent(&d_yc);
        d_a.scale(weights.gamma as f32);
        match d_latent.as_mut() {
            Some(d) => d.add_assign(&d_a),
            None => d_latent = Some(d_a),
        }
    }
    if let Some(d) = d_latent {
        let dx = codec.input_gradient(&ycam.degrade, &d, false, None);
        d_y0.data_mut().iter_mut().zip(&dx.data).for_each(|(o, &g)| *o += g as f64);
    }

    let mut d_xj = Tensor::zeros(3, x0.height(), x0.width());
    for (i, o) in d_xj.data.iter_mut().enumerate() {
        let through = if inside[i] { d_y0.data()[i] } else { 0.0 };
        *o = (weights.alpha * d_xj1.data()[i] + through) as f32;
    }
    let mut grad = zeros_like(generator);
    generator.backward(&gtr, &d_xj, &mut grad);

    let losses = total_loss((l1, l2, l3), weights);
    if !losses.all_finite() {
        return Err(Error::Divergence {
            layer: 0,
            detail: format!("non-finite JND loss {losses:?}"),
        });
    }
    Ok(SampleOutcome { grad, losses })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JndTraceRow {
    pub step: usize,
    pub loss1: f64,
    pub loss2: f64,
    pub loss3: f64,
    pub total: f64,
}

pub struct JndTrainer {
    pub config: JndTrainConfig,
    pub generator: GeneratorModel,
    pub optimizer: Adam,
    pub trace: Vec<JndTraceRow>,
    codec_hash: String,
    bank: IqaBank,
    touched: Vec<bool>,
}

impl JndTrainer {
    pub fn new(config: JndTrainConfig, codec: &CodecModel, generator: GeneratorModel) -> Result<Self> {
        config.validate()?;
        codec.ensure_trained()?;
        let bank = IqaBank::default();
        if config.aic_weights.len() != bank.metrics.len() {
            return Err(Error::Config(format!(
                "{} AIC weights for {} metrics",
                config.aic_weights.len(),
                bank.metrics.len()
            )));
        }
        let optimizer = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            &generator,
        );
        let n = crate::nn::module::param_count(&generator);
        Ok(Self {
            config,
            optimizer,
            trace: Vec::new(),
            codec_hash: content_hash(codec),
            bank,
            touched: vec![false; n],
            generator,
        })
    }

    /// Continues a run from saved generator weights, optimizer state and trace.
    pub fn resume(
        config: JndTrainConfig,
        codec: &CodecModel,
        generator: GeneratorModel,
        optimizer: Adam,
        trace: Vec<JndTraceRow>,
    ) -> Result<Self> {
        let mut t = Self::new(config, codec, generator)?;
        if optimizer.m.len() != t.optimizer.m.len() {
            return Err(Error::Checkpoint("optimizer state does not match the generator".into()));
        }
        t.optimizer = optimizer;
        t.trace = trace;
        Ok(t)
    }

    pub fn codec_hash(&self) -> &str {
        &self.codec_hash
    }

    pub fn next_step(&self) -> usize {
        self.optimizer.step as usize
    }

    /// Fraction of generator parameters that have received a nonzero
    /// gradient so far.
    pub fn gradient_coverage(&self) -> f64 {
        self.touched.iter().filter(|t| **t).count() as f64 / self.touched.len().max(1) as f64
    }

    /// Names of parameter tensors with some element never touched.
    pub fn untouched_parameters(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut off = 0;
        for (name, s) in crate::nn::module::named_slices(&self.generator) {
            if self.touched[off..off + s.len()].iter().any(|t| !t) {
                out.push(name);
            }
            off += s.len();
        }
        out
    }

    /// Batch crops for a step (deterministic in seed and step).
    pub fn crop_specs(&self, images: &[ImageTensor], step: usize) -> Vec<CropSpec> {
        sample_crop_specs(images, self.config.crop, self.config.batch, derive_seed(self.config.seed, &[3, step as u64]))
    }

    /// Mean losses and gradient over a batch, without updating.
    pub fn evaluate_batch(
        &self,
        codec: &CodecModel,
        images: &[ImageTensor],
        external: Option<&[ExternalPrior]>,
        specs: &[CropSpec],
    ) -> Result<(LossBreakdown, GeneratorModel)> {
        let cfg = &self.config;
        let crop = cfg.crop;
        let mut acc = zeros_like(&self.generator);
        let mut sums = [0.0f64; 4];
        let mut failure: Option<Error> = None;
        let generator = &self.generator;
        let bank = &self.bank;
        cfg.execution.map_fold(
            specs.len(),
            &mut (&mut acc, &mut sums, &mut failure),
            |i| {
                let s = &specs[i];
                let x0 = images[s.image].crop(s.top, s.left, crop, crop)?;
                let ext = match external {
                    Some(e) => Some(e[s.image].crop(s, crop)?),
                    None => None,
                };
                sample_step(codec, generator, &x0, ext.as_ref(), cfg, bank)
            },
            |(acc, sums, failure), r| match r {
                Ok(o) => {
                    add_into(&mut **acc, &o.grad);
                    sums[0] += o.losses.loss1;
                    sums[1] += o.losses.loss2;
                    sums[2] += o.losses.loss3;
                    sums[3] += o.losses.total;
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let b = specs.len() as f64;
        scale(&mut acc, 1.0 / b as f32);
        let losses = total_loss((sums[0] / b, sums[1] / b, sums[2] / b), cfg.effective_weights());
        Ok((losses, acc))
    }

    pub fn step(
        &mut self,
        codec: &CodecModel,
        images: &[ImageTensor],
        external: Option<&[ExternalPrior]>,
    ) -> Result<JndTraceRow> {
        let step = self.next_step();
        let specs = self.crop_specs(images, step);
        let (losses, grad) = self.evaluate_batch(codec, images, external, &specs)?;
        if !crate::nn::module::all_finite(&grad) {
            return Err(Error::Divergence {
                layer: 0,
                detail: "non-finite generator gradient".into(),
            });
        }
        let mut off = 0;
        for s in slices(&grad) {
            for (t, g) in self.touched[off..off + s.len()].iter_mut().zip(s) {
                *t |= *g != 0.0;
            }
            off += s.len();
        }
        self.optimizer.update(&mut self.generator, &grad);
        let hash = content_hash(codec);
        if hash != self.codec_hash {
            return Err(Error::FrozenModified(format!(
                "codec hash changed from {} to {hash}",
                self.codec_hash
            )));
        }
        let row = JndTraceRow {
            step: step + 1,
            loss1: losses.loss1,
            loss2: losses.loss2,
            loss3: losses.loss3,
            total: losses.total,
        };
        self.trace.push(row);
        Ok(row)
    }
}

fn check_dataset(images: &[ImageTensor], external: Option<&[ExternalPrior]>, cfg: &JndTrainConfig) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Ingest("empty training set".into()));
    }
    if let Some(i) = images.iter().position(|x| x.height() < cfg.crop || x.width() < cfg.crop) {
        return Err(Error::Config(format!("image {i} is smaller than the {} crop", cfg.crop)));
    }
    match external {
        Some(e) if e.len() != images.len() => Err(Error::Config(format!(
            "{} external prior pairs for {} images",
            e.len(),
            images.len()
        ))),
        None if cfg.ablation == Ablation::BlCam => Err(Error::Config("bl-cam needs external prior maps".into())),
        _ => Ok(()),
    }
}

/// Trains a fresh generator for `config.steps` steps.
pub fn train_jnd(
    codec: &CodecModel,
    images: &[ImageTensor],
    external: Option<&[ExternalPrior]>,
    config: &JndTrainConfig,
    arch: super::GeneratorArch,
    mut on_step: impl FnMut(&JndTrainer, &JndTraceRow) -> Result<()>,
) -> Result<JndTrainer> {
    check_dataset(images, external, config)?;
    let generator = GeneratorModel::new(arch, derive_seed(config.seed, &[4]));
    let mut trainer = JndTrainer::new(config.clone(), codec, generator)?;
    while trainer.next_step() < config.steps {
        let row = trainer.step(codec, images, external)?;
        on_step(&trainer, &row)?;
    }
    Ok(trainer)
}
