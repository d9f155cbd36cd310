use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcam::PriorMaps;
use crate::imaging::{ImageTensor, Planes};
use crate::nn::act::{leaky_relu, leaky_relu_backward, sigmoid};
use crate::nn::conv::{Conv2dCache, ConvTranspose2dCache};
use crate::nn::module::{visit_child, visit_child_mut, Module};
use crate::nn::{Conv2d, ConvTranspose2d, Padding, Tensor};

/// Image, guided map and CAM, concatenated.
pub const INPUT_CHANNELS: usize = 7;
/// Negative-side slope of the hidden activations. Keeps every unit passing
/// gradient, so no filter can die during training.
const LEAKY_SLOPE: f32 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorArch {
    /// Encoder widths; the decoder mirrors them back to 3 channels.
    pub widths: Vec<usize>,
    pub kernel: usize,
    /// Upper bound of the JND magnitude, in `[0, 1]` pixel units.
    pub amplitude: f32,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        Self {
            widths: vec![64, 128, 256, 512],
            kernel: 3,
            amplitude: 0.2,
        }
    }
}

impl GeneratorArch {
    pub fn multiple(&self) -> usize {
        1 << self.widths.len()
    }
}

/// Nonnegative, finite per-pixel JND magnitudes, `3 × H × W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Planes", into = "Planes")]
pub struct JndMap(Planes);

impl JndMap {
    pub fn new(values: Planes) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidValue(format!("JND values must be finite and >= 0, found {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Planes {
        &self.0
    }

    pub fn into_planes(self) -> Planes {
        self.0
    }

    pub fn mean_square(&self) -> f64 {
        self.0.data().iter().map(|v| v * v).sum::<f64>() / self.0.len() as f64
    }
}

impl TryFrom<Planes> for JndMap {
    type Error = Error;
    fn try_from(p: Planes) -> Result<Self> {
        Self::new(p)
    }
}

impl From<JndMap> for Planes {
    fn from(j: JndMap) -> Planes {
        j.0
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorModel {
    pub arch: GeneratorArch,
    pub encoder: Vec<Conv2d>,
    pub decoder: Vec<ConvTranspose2d>,
}

pub struct GeneratorTrace {
    enc: Vec<Conv2dCache>,
    enc_pre: Vec<Tensor>,
    dec: Vec<ConvTranspose2dCache>,
    dec_pre: Vec<Tensor>,
    /// Sigmoid outputs at the padded size.
    gate: Tensor,
    input_size: (usize, usize),
    /// Cropped JND magnitudes.
    pub output: Tensor,
}

impl GeneratorModel {
    pub fn new(arch: GeneratorArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = arch.kernel;
        let he = std::f32::consts::SQRT_2;
        let mut encoder = Vec::new();
        let mut prev = INPUT_CHANNELS;
        for &w in &arch.widths {
            encoder.push(Conv2d::new(prev, w, k, 2, Padding::Zero, he, &mut rng));
            prev = w;
        }
        let mut decoder = Vec::new();
        let outs: Vec<usize> = arch.widths.iter().rev().skip(1).copied().chain([3]).collect();
        for (i, &o) in outs.iter().enumerate() {
            let gain = if i + 1 == outs.len() { 1.0 } else { he };
            decoder.push(ConvTranspose2d::new(prev, o, k, 2, gain, &mut rng));
            prev = o;
        }
        Self { arch, encoder, decoder }
    }

    /// Forward on a 7-channel input of any size at least 16 pixels per side.
    pub fn forward_trace(&self, input: &Tensor) -> Result<GeneratorTrace> {
        if input.channels != INPUT_CHANNELS {
            return Err(Error::Shape(format!(
                "generator expects {INPUT_CHANNELS} input channels, got {}",
                input.channels
            )));
        }
        let mut h = input.pad_to_multiple(self.arch.multiple());
        let mut enc = Vec::new();
        let mut enc_pre = Vec::new();
        for conv in &self.encoder {
            let (y, c) = conv.forward(&h);
            h = leaky_relu(&y, LEAKY_SLOPE);
            enc.push(c);
            enc_pre.push(y);
        }
        let mut dec = Vec::new();
        let mut dec_pre = Vec::new();
        let last = self.decoder.len() - 1;
        for (i, d) in self.decoder.iter().enumerate() {
            let (y, c) = d.forward(&h);
            h = if i == last { y.clone() } else { leaky_relu(&y, LEAKY_SLOPE) };
            dec.push(c);
            dec_pre.push(y);
        }
        let mut gate = h;
        gate.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut output = gate.crop(input.height, input.width);
        output.scale(self.arch.amplitude);
        if !output.all_finite() {
            return Err(Error::Divergence {
                layer: self.encoder.len() + self.decoder.len(),
                detail: "non-finite generator output".into(),
            });
        }
        Ok(GeneratorTrace {
            enc,
            enc_pre,
            dec,
            dec_pre,
            gate,
            input_size: (input.height, input.width),
            output,
        })
    }

    /// Accumulates parameter gradients into `grad` given `d_output`.
    pub fn backward(&self, tr: &GeneratorTrace, d_output: &Tensor, grad: &mut GeneratorModel) {
        let (ph, pw) = (tr.gate.height, tr.gate.width);
        let mut d = d_output.uncrop(ph, pw);
        let a = self.arch.amplitude;
        for (g, &s) in d.data.iter_mut().zip(&tr.gate.data) {
            *g *= a * s * (1.0 - s);
        }
        let last = self.decoder.len() - 1;
        for i in (0..self.decoder.len()).rev() {
            if i != last {
                d = leaky_relu_backward(&tr.dec_pre[i], &d, LEAKY_SLOPE);
            }
            d = self.decoder[i].backward(&tr.dec[i], &d, Some(&mut grad.decoder[i]));
        }
        for i in (0..self.encoder.len()).rev() {
            d = leaky_relu_backward(&tr.enc_pre[i], &d, LEAKY_SLOPE);
            d = self.encoder[i].backward(&tr.enc[i], &d, Some(&mut grad.encoder[i]));
        }
        debug_assert!(tr.input_size.0 <= d.height);
    }
}

impl Module for GeneratorModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        for (i, c) in self.encoder.iter().enumerate() {
            visit_child(&format!("encoder{i}"), c, f);
        }
        for (i, d) in self.decoder.iter().enumerate() {
            visit_child(&format!("decoder{i}"), d, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        for (i, c) in self.encoder.iter_mut().enumerate() {
            visit_child_mut(&format!("encoder{i}"), c, f);
        }
        for (i, d) in self.decoder.iter_mut().enumerate() {
            visit_child_mut(&format!("decoder{i}"), d, f);
        }
    }
}

/// Scales the guided map to unit peak magnitude; an all-zero map stays zero.
pub fn normalize_guided(guided: &Planes) -> Planes {
    let m = guided.max_abs();
    if m > 0.0 {
        guided.map(|v| v / m)
    } else {
        guided.clone()
    }
}

/// The 7-channel generator input `[x0, guided/max|guided|, cam]`.
pub fn generator_input(x: &ImageTensor, priors: &PriorMaps) -> Result<Tensor> {
    priors.validate_for(x)?;
    let xt = Tensor::from(x.planes());
    let g = Tensor::from(&normalize_guided(&priors.guided));
    let c = Tensor::from(&priors.cam);
    Ok(Tensor::concat(&[&xt, &g, &c]))
}

pub fn generate(model: &GeneratorModel, x: &ImageTensor, priors: &PriorMaps) -> Result<JndMap> {
    x.ensure_min_side()?;
    let tr = model.forward_trace(&generator_input(x, priors)?)?;
    JndMap::new(tr.output.to_planes())
}

/// `clip(x + xj, 0, 1)`.
pub fn distort(x: &ImageTensor, xj: &JndMap) -> Result<ImageTensor> {
    x.planes().ensure_same_shape(xj.values(), "distort")?;
    let mut p = x.planes().clone();
    p.data_mut().iter_mut().zip(xj.values().data()).for_each(|(a, b)| *a += b);
    Ok(ImageTensor::clipped(p))
}
