//! Grad-CAM attention and guided sensitivity maps of an image with respect
//! to the frozen codec's reconstruction error.
//!
//! Target scalar `t = mse(x, degrade(x))`; target layer is the last analysis
//! conv. Rounding is treated as identity in the backward pass.

use serde::{Deserialize, Serialize};

use crate::codec::{CodecModel, DegradeTrace, QuantMode, DOWNSAMPLE};
use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, Planes};
use crate::nn::act::{resize_bilinear, resize_bilinear_adjoint};
use crate::nn::Tensor;

/// Raw maps whose range is below this fraction of their peak are treated as
/// constant, which absorbs summation-order rounding on flat inputs.
const CONSTANT_RANGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMaps {
    /// `1 × H × W`, values in `[0, 1]`.
    pub cam: Planes,
    /// `3 × H × W`, finite.
    pub guided: Planes,
    /// The reconstruction error the gradients were taken from.
    pub target_scalar: f64,
}

impl PriorMaps {
    pub fn validate_for(&self, x: &ImageTensor) -> Result<()> {
        let (_, h, w) = x.shape();
        if self.cam.shape() != (1, h, w) || self.guided.shape() != (3, h, w) {
            return Err(Error::Shape(format!(
                "priors cam {:?} / guided {:?} do not match image {h}x{w}",
                self.cam.shape(),
                self.guided.shape()
            )));
        }
        if !self.guided.data().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidValue("non-finite guided map".into()));
        }
        Ok(())
    }
}

/// Codec forward record plus everything needed to differentiate the CAM
/// with respect to the target-layer activations.
pub struct CamTrace {
    pub degrade: DegradeTrace,
    pub target_scalar: f64,
    /// Per-channel weights, held constant in the backward pass.
    pub alpha: Vec<f32>,
    /// `1 × H × W` normalized map.
    pub cam: Planes,
    /// Upsampled-and-cropped ReLU map before normalization.
    raw: Vec<f64>,
    /// Pre-ReLU weighted sum on the latent grid.
    pre_relu: Vec<f32>,
    argmin: usize,
    argmax: usize,
    range: f64,
}

fn target_and_alpha(codec: &CodecModel, tr: &DegradeTrace, x: &Tensor) -> (f64, Vec<f32>) {
    let n = x.len() as f64;
    let mut sum = 0.0;
    let mut d_out = tr.output.clone();
    for (d, &v) in d_out.data.iter_mut().zip(&x.data) {
        let e = *d - v;
        sum += (e as f64) * (e as f64);
        *d = (2.0 * e as f64 / n) as f32;
    }
    tr.mask_clipped(&mut d_out);
    let d_latent = codec.latent_gradient(tr, &d_out, false, None);
    let per = d_latent.spatial() as f32;
    let alpha = (0..d_latent.channels)
        .map(|c| d_latent.plane(c).iter().sum::<f32>() / per)
        .collect();
    (sum / n, alpha)
}

/// Computes the CAM of `x` and keeps the trace for backpropagation.
pub fn cam_trace(codec: &CodecModel, x: &ImageTensor) -> Result<CamTrace> {
    codec.ensure_trained()?;
    x.ensure_min_side()?;
    let xt = Tensor::from(x.planes());
    let degrade = codec.degrade_trace(&xt, QuantMode::Eval)?;
    let (target_scalar, alpha) = target_and_alpha(codec, &degrade, &xt);

    let f = cam_forward(&degrade.analysis.latent, &alpha, x.height(), x.width())?;
    Ok(CamTrace {
        degrade,
        target_scalar,
        alpha,
        cam: f.cam,
        raw: f.raw,
        pre_relu: f.pre_relu,
        argmin: f.argmin,
        argmax: f.argmax,
        range: f.range,
    })
}

struct CamForward {
    cam: Planes,
    raw: Vec<f64>,
    pre_relu: Vec<f32>,
    argmin: usize,
    argmax: usize,
    range: f64,
}

/// `normalize(crop(upsample(ReLU(Σ α_k A_k))))` on an `h × w` image.
fn cam_forward(a: &Tensor, alpha: &[f32], h: usize, w: usize) -> Result<CamForward> {
    let per = a.spatial();
    let mut pre_relu = vec![0.0f32; per];
    for (c, &wt) in alpha.iter().enumerate() {
        for (p, &v) in pre_relu.iter_mut().zip(a.plane(c)) {
            *p += wt * v;
        }
    }
    let relu = Tensor::from_vec(1, a.height, a.width, pre_relu.iter().map(|v| v.max(0.0)).collect());
    let up = resize_bilinear(&relu, a.height * DOWNSAMPLE, a.width * DOWNSAMPLE).crop(h, w);
    let raw: Vec<f64> = up.data.iter().map(|&v| v as f64).collect();

    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in raw.iter().enumerate() {
        if v < raw[argmin] {
            argmin = i;
        }
        if v > raw[argmax] {
            argmax = i;
        }
    }
    let (lo, hi) = (raw[argmin], raw[argmax]);
    let range = hi - lo;
    let constant = range <= CONSTANT_RANGE * hi.abs() || range == 0.0;
    let range = if constant { 0.0 } else { range };
    let data = raw
        .iter()
        .map(|&v| if constant { 0.0 } else { ((v - lo) / range).clamp(0.0, 1.0) })
        .collect();
    Ok(CamForward {
        cam: Planes::from_vec(1, h, w, data)?,
        raw,
        pre_relu,
        argmin,
        argmax,
        range,
    })
}

impl CamTrace {
    /// Gradient at the target-layer activations given a gradient on the
    /// normalized CAM, with the channel weights held constant.
    pub fn backward_to_latent(&self, d_cam: &Planes) -> Tensor {
        let lat = &self.degrade.analysis.latent;
        let (h, w) = (self.cam.height(), self.cam.width());
        let mut d_raw = vec![0.0f64; self.raw.len()];
        if self.range > 0.0 {
            let r = self.range;
            let (lo, hi) = (self.raw[self.argmin], self.raw[self.argmax]);
            let (mut d_lo, mut d_hi) = (0.0, 0.0);
            for (i, (&g, &v)) in d_cam.data().iter().zip(&self.raw).enumerate() {
                d_raw[i] += g / r;
                d_hi -= g * (v - lo) / (r * r);
                d_lo += g * (v - hi) / (r * r);
            }
            d_raw[self.argmax] += d_hi;
            d_raw[self.argmin] += d_lo;
        }
        let d_up = Tensor::from_vec(1, h, w, d_raw.iter().map(|&v| v as f32).collect());
        let (ph, pw) = (lat.height * DOWNSAMPLE, lat.width * DOWNSAMPLE);
        let mut d_relu = resize_bilinear_adjoint(&d_up.uncrop(ph, pw), lat.height, lat.width);
        for (d, &p) in d_relu.data.iter_mut().zip(&self.pre_relu) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        let mut d_a = Tensor::zeros(lat.channels, lat.height, lat.width);
        for (c, &a) in self.alpha.iter().enumerate() {
            for (o, &d) in d_a.plane_mut(c).iter_mut().zip(&d_relu.data) {
                *o = a * d;
            }
        }
        d_a
    }

    /// Guided sensitivity: input gradient of the target with negative
    /// backward signals gated at every GDN layer, times the normalized CAM.
    pub fn guided(&self, codec: &CodecModel, x: &ImageTensor) -> Result<Planes> {
        let xt = Tensor::from(x.planes());
        let tr = &self.degrade;
        let n = xt.len() as f32;
        let mut d_out = tr.output.clone();
        for (d, &v) in d_out.data.iter_mut().zip(&xt.data) {
            *d = 2.0 * (*d - v) / n;
        }
        tr.mask_clipped(&mut d_out);
        let d_latent = codec.latent_gradient(tr, &d_out, true, None);
        let dx = codec.input_gradient(tr, &d_latent, true, None);
        let cam = self.cam.data();
        let mut g = dx.to_planes();
        for c in 0..g.channels() {
            for (v, &m) in g.plane_mut(c).iter_mut().zip(cam) {
                *v *= m;
            }
        }
        if !g.data().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidValue("non-finite guided map".into()));
        }
        Ok(g)
    }
}

/// Normalized CAM of `x`, `1 × H × W`.
pub fn cam_map(codec: &CodecModel, x: &ImageTensor) -> Result<Planes> {
    Ok(cam_trace(codec, x)?.cam)
}

pub fn guided_map(codec: &CodecModel, x: &ImageTensor) -> Result<Planes> {
    cam_trace(codec, x)?.guided(codec, x)
}

/// Both priors from one codec pass.
pub fn prior_maps(codec: &CodecModel, x: &ImageTensor) -> Result<PriorMaps> {
    let tr = cam_trace(codec, x)?;
    let guided = tr.guided(codec, x)?;
    Ok(PriorMaps {
        cam: tr.cam,
        guided,
        target_scalar: tr.target_scalar,
    })
}
