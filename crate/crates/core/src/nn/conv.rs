use rand::Rng;

use super::module::Module;
use super::ops::{col2im, gemm, im2col, Geometry, Padding};
use super::tensor::Tensor;

fn uniform_init(rng: &mut impl Rng, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Strided 2-D convolution with "same" padding (`kernel / 2`).
///
/// `weight` is `out_channels × (in_channels · kernel²)` row-major.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub struct Conv2dCache {
    geom: Geometry,
    cols: Vec<f32>,
}

impl Conv2d {
    /// Uniform init with standard deviation `gain / sqrt(fan_in)`.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        gain: f32,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let bound = gain * (3.0 / fan_in as f32).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: uniform_init(rng, out_channels * fan_in, bound),
            bias: vec![0.0; out_channels],
        }
    }

    pub fn geometry(&self, x: &Tensor) -> Geometry {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        Geometry::new(self.in_channels, x.height, x.width, self.kernel, self.stride)
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, Conv2dCache) {
        let geom = self.geometry(x);
        let mut cols = vec![0.0; geom.rows() * geom.cols()];
        im2col(&x.data, &geom, self.padding, &mut cols);
        let mut y = Tensor::zeros(self.out_channels, geom.out_h, geom.out_w);
        for (c, b) in self.bias.iter().enumerate() {
            y.plane_mut(c).fill(*b);
        }
        gemm(
            self.out_channels,
            geom.rows(),
            geom.cols(),
            &self.weight,
            false,
            &cols,
            false,
            1.0,
            &mut y.data,
        );
        (y, Conv2dCache { geom, cols })
    }

    /// Returns the input gradient; parameter gradients accumulate into `grad` when given.
    pub fn backward(&self, cache: &Conv2dCache, dy: &Tensor, grad: Option<&mut Conv2d>) -> Tensor {
        let g = &cache.geom;
        assert_eq!(dy.shape(), (self.out_channels, g.out_h, g.out_w), "conv dy shape");
        if let Some(grad) = grad {
            gemm(
                self.out_channels,
                g.cols(),
                g.rows(),
                &dy.data,
                false,
                &cache.cols,
                true,
                1.0,
                &mut grad.weight,
            );
            for c in 0..self.out_channels {
                grad.bias[c] += dy.plane(c).iter().sum::<f32>();
            }
        }
        let mut dcols = vec![0.0; g.rows() * g.cols()];
        gemm(
            g.rows(),
            self.out_channels,
            g.cols(),
            &self.weight,
            true,
            &dy.data,
            false,
            0.0,
            &mut dcols,
        );
        let mut dx = Tensor::zeros(self.in_channels, g.in_h, g.in_w);
        col2im(&dcols, g, self.padding, &mut dx.data);
        dx
    }
}

impl Module for Conv2d {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

/// Strided transposed convolution: the exact adjoint of a zero-padded
/// [`Conv2d`] producing `stride ×` larger outputs.
///
/// `weight` is `in_channels × (out_channels · kernel²)` row-major.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub struct ConvTranspose2dCache {
    geom: Geometry,
    input: Tensor,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        gain: f32,
        rng: &mut impl Rng,
    ) -> Self {
        // Each output pixel receives roughly in_channels·kernel²/stride² taps.
        let fan_in = (in_channels * kernel * kernel).div_ceil(stride * stride);
        let bound = gain * (3.0 / fan_in as f32).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: uniform_init(rng, in_channels * out_channels * kernel * kernel, bound),
            bias: vec![0.0; out_channels],
        }
    }

    fn geometry(&self, x: &Tensor) -> Geometry {
        assert_eq!(x.channels, self.in_channels, "deconv input channels");
        let g = Geometry::new(
            self.out_channels,
            x.height * self.stride,
            x.width * self.stride,
            self.kernel,
            self.stride,
        );
        debug_assert_eq!((g.out_h, g.out_w), (x.height, x.width));
        g
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, ConvTranspose2dCache) {
        let y = self.apply(x);
        let geom = self.geometry(x);
        (y, ConvTranspose2dCache { geom, input: x.clone() })
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let mut cols = vec![0.0; g.rows() * g.cols()];
        gemm(
            g.rows(),
            self.in_channels,
            g.cols(),
            &self.weight,
            true,
            &x.data,
            false,
            0.0,
            &mut cols,
        );
        let mut y = Tensor::zeros(self.out_channels, g.in_h, g.in_w);
        col2im(&cols, &g, Padding::Zero, &mut y.data);
        for (c, b) in self.bias.iter().enumerate() {
            for v in y.plane_mut(c) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(
        &self,
        cache: &ConvTranspose2dCache,
        dy: &Tensor,
        grad: Option<&mut ConvTranspose2d>,
    ) -> Tensor {
        let g = &cache.geom;
        assert_eq!(dy.shape(), (self.out_channels, g.in_h, g.in_w), "deconv dy shape");
        let mut dcols = vec![0.0; g.rows() * g.cols()];
        im2col(&dy.data, g, Padding::Zero, &mut dcols);
        if let Some(grad) = grad {
            gemm(
                self.in_channels,
                g.cols(),
                g.rows(),
                &cache.input.data,
                false,
                &dcols,
                true,
                1.0,
                &mut grad.weight,
            );
            for c in 0..self.out_channels {
                grad.bias[c] += dy.plane(c).iter().sum::<f32>();
            }
        }
        let mut dx = Tensor::zeros(self.in_channels, g.out_h, g.out_w);
        gemm(
            self.in_channels,
            g.rows(),
            g.cols(),
            &self.weight,
            false,
            &dcols,
            false,
            0.0,
            &mut dx.data,
        );
        dx
    }
}

impl Module for ConvTranspose2d {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}
