use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entropy::{rate_bits, FactorizedDensity, RateEstimate};
use crate::error::{Error, Result};
use crate::imaging::{ImageTensor, MIN_SIDE};
use crate::nn::act::gate_negative;
use crate::nn::conv::{Conv2dCache, ConvTranspose2dCache};
use crate::nn::gdn::GdnCache;
use crate::nn::module::{visit_child, visit_child_mut, Module};
use crate::nn::{Conv2d, ConvTranspose2d, Gdn, Padding, Tensor};

/// Total spatial downsampling of the analysis transform.
pub const DOWNSAMPLE: usize = 8;

pub const LATENT_SCALE: f32 = 16.0;

/// Inputs are centred before the first conv.
const INPUT_OFFSET: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecArch {
    pub channels: usize,
    pub kernel: usize,
    /// Fixed gain between the last analysis conv and the quantizer (undone
    /// before the first synthesis layer). Puts the initial latent well above
    /// the unit quantization step so the rate–distortion tradeoff is
    /// reachable in few steps.
    pub latent_scale: f32,
}

impl Default for CodecArch {
    fn default() -> Self {
        Self {
            channels: 128,
            kernel: 5,
            latent_scale: LATENT_SCALE,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub steps: u64,
    pub trained: bool,
    /// Mean eval-mode reconstruction PSNR on the fidelity set, in dB.
    pub fidelity_psnr: Option<f64>,
    pub min_gdn_denominator: Option<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Round to nearest integer.
    Eval,
    /// Additive uniform noise in (−½, ½) drawn from the given seed.
    Train { seed: u64 },
}

/// Analysis-transform output, `channels × h/8 × w/8`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTensor {
    pub values: Tensor,
    pub quantized: bool,
    /// Spatial size of the image the latent was computed from.
    pub image_size: (usize, usize),
}

/// The learned lossy codec: analysis, quantizer, rate model, synthesis.
#[derive(Clone, Debug)]
pub struct CodecModel {
    pub arch: CodecArch,
    pub conv1: Conv2d,
    pub gdn1: Gdn,
    pub conv2: Conv2d,
    pub gdn2: Gdn,
    pub conv3: Conv2d,
    pub deconv1: ConvTranspose2d,
    pub igdn1: Gdn,
    pub deconv2: ConvTranspose2d,
    pub igdn2: Gdn,
    pub deconv3: ConvTranspose2d,
    pub density: FactorizedDensity,
    pub state: TrainingState,
}

pub struct AnalysisTrace {
    c1: Conv2dCache,
    g1: GdnCache,
    c2: Conv2dCache,
    g2: GdnCache,
    c3: Conv2dCache,
    input_size: (usize, usize),
    /// Conv3 output: the latent and the Grad-CAM target layer.
    pub latent: Tensor,
}

impl AnalysisTrace {
    pub fn min_gdn_denominator(&self) -> f32 {
        self.g1.min_denominator().min(self.g2.min_denominator())
    }

    /// `(channels, height, width)` after each strided conv.
    pub fn stage_shapes(&self) -> [(usize, usize, usize); 3] {
        [self.g1.input_shape(), self.g2.input_shape(), self.latent.shape()]
    }
}

pub struct SynthesisTrace {
    d1: ConvTranspose2dCache,
    i1: GdnCache,
    d2: ConvTranspose2dCache,
    i2: GdnCache,
    d3: ConvTranspose2dCache,
    /// Unclipped reconstruction at the padded size.
    pub output: Tensor,
}

impl SynthesisTrace {
    pub fn min_gdn_denominator(&self) -> f32 {
        self.i1.min_denominator().min(self.i2.min_denominator())
    }

    /// `(channels, height, width)` after each transposed conv.
    pub fn stage_shapes(&self) -> [(usize, usize, usize); 3] {
        [self.i1.input_shape(), self.i2.input_shape(), self.output.shape()]
    }
}

/// Full forward record of `synthesis ∘ quantize ∘ analysis` on one image.
pub struct DegradeTrace {
    pub analysis: AnalysisTrace,
    pub quantized: Tensor,
    pub synthesis: SynthesisTrace,
    /// Reconstruction cropped to the input size, before clipping.
    pub raw_output: Tensor,
    /// Reconstruction cropped and clipped to `[0, 1]`.
    pub output: Tensor,
    image_size: (usize, usize),
}

impl DegradeTrace {
    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    /// Zeroes gradient entries where the output was clipped.
    pub fn mask_clipped(&self, d: &mut Tensor) {
        for (g, r) in d.data.iter_mut().zip(&self.raw_output.data) {
            if !(0.0..=1.0).contains(r) {
                *g = 0.0;
            }
        }
    }
}

fn check_finite(t: &Tensor, layer: usize) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            layer,
            detail: "non-finite activation".into(),
        })
    }
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Quantizer. Eval rounds to nearest (half away from zero); train adds
/// uniform noise in (−½, ½).
pub fn quantize(z: &LatentTensor, mode: QuantMode) -> LatentTensor {
    let mut values = z.values.clone();
    match mode {
        QuantMode::Eval => {
            for v in &mut values.data {
                *v = v.round();
            }
        }
        QuantMode::Train { seed } => {
            let mut rng = noise_rng(seed);
            add_uniform_noise(&mut values, &mut rng);
        }
    }
    LatentTensor {
        values,
        quantized: matches!(mode, QuantMode::Eval),
        image_size: z.image_size,
    }
}

fn add_uniform_noise(t: &mut Tensor, rng: &mut impl Rng) {
    for v in &mut t.data {
        let u: f32 = rng.random_range(-0.5..0.5);
        // The half-open range can return exactly −½; keep the bound open.
        *v += if u == -0.5 { 0.0 } else { u };
    }
}

impl CodecModel {
    pub fn new(arch: CodecArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (arch.channels, arch.kernel);
        let rep = Padding::Replicate;
        let mut deconv3 = ConvTranspose2d::new(n, 3, k, 2, 1.0, &mut rng);
        deconv3.bias = vec![0.5; 3];
        Self {
            arch,
            conv1: Conv2d::new(3, n, k, 2, rep, 1.0, &mut rng),
            gdn1: Gdn::new(n, false),
            conv2: Conv2d::new(n, n, k, 2, rep, 1.0, &mut rng),
            gdn2: Gdn::new(n, false),
            conv3: Conv2d::new(n, n, k, 2, rep, 1.0, &mut rng),
            deconv1: ConvTranspose2d::new(n, n, k, 2, 1.0, &mut rng),
            igdn1: Gdn::new(n, true),
            deconv2: ConvTranspose2d::new(n, n, k, 2, 1.0, &mut rng),
            igdn2: Gdn::new(n, true),
            deconv3,
            density: FactorizedDensity::new(n, &mut rng),
            state: TrainingState::default(),
        }
    }

    pub fn ensure_trained(&self) -> Result<()> {
        if self.state.trained {
            Ok(())
        } else {
            Err(Error::Config(
                "codec is not trained; train it (train-codec) before using it for JND work".into(),
            ))
        }
    }

    /// Restores GDN parameter constraints.
    pub fn project(&mut self) {
        for g in [&mut self.gdn1, &mut self.gdn2, &mut self.igdn1, &mut self.igdn2] {
            g.project();
        }
    }

    /// Layer-by-layer analysis of an input whose sides are multiples of 8.
    pub fn analysis_trace(&self, x: &Tensor) -> Result<AnalysisTrace> {
        assert!(
            x.height.is_multiple_of(DOWNSAMPLE) && x.width.is_multiple_of(DOWNSAMPLE),
            "analysis input must be padded to a multiple of {DOWNSAMPLE}"
        );
        let mut centred = x.clone();
        centred.data.iter_mut().for_each(|v| *v -= INPUT_OFFSET);
        let (h, c1) = self.conv1.forward(&centred);
        check_finite(&h, 1)?;
        let (h, g1) = self.gdn1.forward(&h);
        check_finite(&h, 2)?;
        let (h, c2) = self.conv2.forward(&h);
        check_finite(&h, 3)?;
        let (h, g2) = self.gdn2.forward(&h);
        check_finite(&h, 4)?;
        let (mut latent, c3) = self.conv3.forward(&h);
        latent.scale(self.arch.latent_scale);
        check_finite(&latent, 5)?;
        Ok(AnalysisTrace {
            c1,
            g1,
            c2,
            g2,
            c3,
            input_size: (x.height, x.width),
            latent,
        })
    }

    /// Backpropagates a latent gradient to the (padded) input. With `gate`,
    /// negative backward signals are zeroed at every GDN output.
    pub fn analysis_backward(
        &self,
        tr: &AnalysisTrace,
        d_latent: &Tensor,
        gate: bool,
        mut grad: Option<&mut CodecModel>,
    ) -> Tensor {
        let mut d_latent = d_latent.clone();
        d_latent.scale(self.arch.latent_scale);
        let mut d = self.conv3.backward(&tr.c3, &d_latent, grad.as_deref_mut().map(|g| &mut g.conv3));
        if gate {
            gate_negative(&mut d);
        }
        let d = self.gdn2.backward(&tr.g2, &d, grad.as_deref_mut().map(|g| &mut g.gdn2));
        let mut d = self.conv2.backward(&tr.c2, &d, grad.as_deref_mut().map(|g| &mut g.conv2));
        if gate {
            gate_negative(&mut d);
        }
        let d = self.gdn1.backward(&tr.g1, &d, grad.as_deref_mut().map(|g| &mut g.gdn1));
        let dx = self.conv1.backward(&tr.c1, &d, grad.map(|g| &mut g.conv1));
        debug_assert_eq!((dx.height, dx.width), tr.input_size);
        dx
    }

    pub fn synthesis_trace(&self, q: &Tensor) -> Result<SynthesisTrace> {
        let mut q = q.clone();
        q.scale(1.0 / self.arch.latent_scale);
        let (h, d1) = self.deconv1.forward(&q);
        check_finite(&h, 6)?;
        let (h, i1) = self.igdn1.forward(&h);
        check_finite(&h, 7)?;
        let (h, d2) = self.deconv2.forward(&h);
        check_finite(&h, 8)?;
        let (h, i2) = self.igdn2.forward(&h);
        check_finite(&h, 9)?;
        let (output, d3) = self.deconv3.forward(&h);
        check_finite(&output, 10)?;
        Ok(SynthesisTrace {
            d1,
            i1,
            d2,
            i2,
            d3,
            output,
        })
    }

    /// Backpropagates an output gradient (padded size) to the latent.
    pub fn synthesis_backward(
        &self,
        tr: &SynthesisTrace,
        d_out: &Tensor,
        gate: bool,
        mut grad: Option<&mut CodecModel>,
    ) -> Tensor {
        let mut d = self.deconv3.backward(&tr.d3, d_out, grad.as_deref_mut().map(|g| &mut g.deconv3));
        if gate {
            gate_negative(&mut d);
        }
        let d = self.igdn2.backward(&tr.i2, &d, grad.as_deref_mut().map(|g| &mut g.igdn2));
        let mut d = self.deconv2.backward(&tr.d2, &d, grad.as_deref_mut().map(|g| &mut g.deconv2));
        if gate {
            gate_negative(&mut d);
        }
        let d = self.igdn1.backward(&tr.i1, &d, grad.as_deref_mut().map(|g| &mut g.igdn1));
        let mut dq = self.deconv1.backward(&tr.d1, &d, grad.map(|g| &mut g.deconv1));
        dq.scale(1.0 / self.arch.latent_scale);
        dq
    }

    /// Forward pass over an arbitrary-size input: replicate-pad to a multiple
    /// of 8, analyse, quantize, synthesize, crop back and clip.
    pub fn degrade_trace(&self, x: &Tensor, mode: QuantMode) -> Result<DegradeTrace> {
        if x.height < MIN_SIDE || x.width < MIN_SIDE {
            return Err(Error::Shape(format!(
                "codec input {}x{} below {MIN_SIDE}x{MIN_SIDE}",
                x.height, x.width
            )));
        }
        let padded = x.pad_to_multiple(DOWNSAMPLE);
        let analysis = self.analysis_trace(&padded)?;
        let mut quantized = analysis.latent.clone();
        match mode {
            QuantMode::Eval => quantized.data.iter_mut().for_each(|v| *v = v.round()),
            QuantMode::Train { seed } => add_uniform_noise(&mut quantized, &mut noise_rng(seed)),
        }
        let synthesis = self.synthesis_trace(&quantized)?;
        let raw_output = synthesis.output.crop(x.height, x.width);
        let mut output = raw_output.clone();
        output.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(DegradeTrace {
            analysis,
            quantized,
            synthesis,
            raw_output,
            output,
            image_size: (x.height, x.width),
        })
    }

    /// Gradient at the latent given a gradient on the cropped raw output;
    /// rounding passes gradients through unchanged.
    pub fn latent_gradient(
        &self,
        tr: &DegradeTrace,
        d_out: &Tensor,
        gate: bool,
        grad: Option<&mut CodecModel>,
    ) -> Tensor {
        let (ph, pw) = (tr.synthesis.output.height, tr.synthesis.output.width);
        self.synthesis_backward(&tr.synthesis, &d_out.uncrop(ph, pw), gate, grad)
    }

    /// Gradient at the original-size input given a latent gradient.
    pub fn input_gradient(
        &self,
        tr: &DegradeTrace,
        d_latent: &Tensor,
        gate: bool,
        grad: Option<&mut CodecModel>,
    ) -> Tensor {
        let (h, w) = tr.image_size;
        self.analysis_backward(&tr.analysis, d_latent, gate, grad).unpad_adjoint(h, w)
    }

    pub fn analysis(&self, x: &ImageTensor) -> Result<LatentTensor> {
        x.ensure_min_side()?;
        let padded = Tensor::from(x.planes()).pad_to_multiple(DOWNSAMPLE);
        let tr = self.analysis_trace(&padded)?;
        Ok(LatentTensor {
            values: tr.latent,
            quantized: false,
            image_size: (x.height(), x.width()),
        })
    }

    pub fn synthesis(&self, q: &LatentTensor) -> Result<ImageTensor> {
        let (h, w) = q.image_size;
        if q.values.channels != self.arch.channels
            || q.values.height != h.div_ceil(DOWNSAMPLE)
            || q.values.width != w.div_ceil(DOWNSAMPLE)
        {
            return Err(Error::Shape(format!(
                "latent {:?} does not match image {h}x{w}",
                q.values.shape()
            )));
        }
        let tr = self.synthesis_trace(&q.values)?;
        Ok(ImageTensor::clipped(tr.output.crop(h, w).to_planes()))
    }

    pub fn rate_estimate(&self, q: &LatentTensor) -> RateEstimate {
        rate_bits(&self.density, q.values.channels, &q.values.data)
    }

    /// `synthesis ∘ quantize ∘ analysis`, shape-preserving.
    pub fn degrade(&self, x: &ImageTensor, mode: QuantMode) -> Result<ImageTensor> {
        x.ensure_min_side()?;
        let tr = self.degrade_trace(&Tensor::from(x.planes()), mode)?;
        Ok(ImageTensor::clipped(tr.output.to_planes()))
    }
}

impl Module for CodecModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        visit_child("analysis.conv1", &self.conv1, f);
        visit_child("analysis.gdn1", &self.gdn1, f);
        visit_child("analysis.conv2", &self.conv2, f);
        visit_child("analysis.gdn2", &self.gdn2, f);
        visit_child("analysis.conv3", &self.conv3, f);
        visit_child("synthesis.deconv1", &self.deconv1, f);
        visit_child("synthesis.igdn1", &self.igdn1, f);
        visit_child("synthesis.deconv2", &self.deconv2, f);
        visit_child("synthesis.igdn2", &self.igdn2, f);
        visit_child("synthesis.deconv3", &self.deconv3, f);
        visit_child("density", &self.density, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        visit_child_mut("analysis.conv1", &mut self.conv1, f);
        visit_child_mut("analysis.gdn1", &mut self.gdn1, f);
        visit_child_mut("analysis.conv2", &mut self.conv2, f);
        visit_child_mut("analysis.gdn2", &mut self.gdn2, f);
        visit_child_mut("analysis.conv3", &mut self.conv3, f);
        visit_child_mut("synthesis.deconv1", &mut self.deconv1, f);
        visit_child_mut("synthesis.igdn1", &mut self.igdn1, f);
        visit_child_mut("synthesis.deconv2", &mut self.deconv2, f);
        visit_child_mut("synthesis.igdn2", &mut self.igdn2, f);
        visit_child_mut("synthesis.deconv3", &mut self.deconv3, f);
        visit_child_mut("density", &mut self.density, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CodecModel {
        CodecModel::new(CodecArch { channels: 4, ..Default::default() }, 3)
    }

    fn ramp(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(3, h, w, |c, y, x| ((c + 2 * y + 3 * x) % 17) as f64 / 16.0)
    }

    #[test]
    fn degrade_preserves_shape_for_non_multiple_sizes() {
        let m = small();
        for (h, w) in [(16, 16), (17, 23), (31, 40)] {
            let x = ramp(h, w);
            let y = m.degrade(&x, QuantMode::Eval).unwrap();
            assert_eq!((y.channels(), y.height(), y.width()), (3, h, w));
            let z = m.analysis(&x).unwrap();
            assert_eq!(z.values.shape(), (4, h.div_ceil(8), w.div_ceil(8)));
        }
    }

    #[test]
    fn undersized_input_is_rejected() {
        let x = ImageTensor::filled(3, 15, 40, 0.5).unwrap();
        assert!(small().degrade(&x, QuantMode::Eval).is_err());
    }

    #[test]
    fn eval_quantization_is_integral_and_train_noise_bounded() {
        let m = small();
        let z = m.analysis(&ramp(24, 24)).unwrap();
        let q = quantize(&z, QuantMode::Eval);
        assert!(q.values.data.iter().all(|v| v.fract() == 0.0));
        let n = quantize(&z, QuantMode::Train { seed: 9 });
        for (a, b) in n.values.data.iter().zip(&z.values.data) {
            assert!((a - b).abs() < 0.5 + 1e-6);
        }
        assert_eq!(n, quantize(&z, QuantMode::Train { seed: 9 }));
    }

    #[test]
    fn untrained_codec_is_refused_for_jnd_work() {
        assert!(small().ensure_trained().is_err());
    }
}
