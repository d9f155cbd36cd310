//! Sobel spatial gradients.
//!
//! Kernels are the 3×3 Sobel pair scaled by 1/8 with edge-replicating
//! borders. By default they act on the Rec.601 luminance plane.

use serde::{Deserialize, Serialize};

use super::planes::{ImageTensor, Planes};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    Luminance,
    PerChannel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    /// Vertical derivative (along rows).
    pub g0: Planes,
    /// Horizontal derivative (along columns).
    pub g1: Planes,
    /// `sqrt(g0² + g1²)`.
    pub magnitude: Planes,
}

const SOBEL_SCALE: f64 = 1.0 / 8.0;

fn sobel_plane(src: &[f64], h: usize, w: usize, g0: &mut [f64], g1: &mut [f64]) {
    let at = |y: isize, x: isize| -> f64 {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        src[yy * w + xx]
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (tl, t, tr) = (at(y - 1, x - 1), at(y - 1, x), at(y - 1, x + 1));
            let (l, r) = (at(y, x - 1), at(y, x + 1));
            let (bl, b, br) = (at(y + 1, x - 1), at(y + 1, x), at(y + 1, x + 1));
            let i = y as usize * w + x as usize;
            g0[i] = SOBEL_SCALE * ((bl + 2.0 * b + br) - (tl + 2.0 * t + tr));
            g1[i] = SOBEL_SCALE * ((tr + 2.0 * r + br) - (tl + 2.0 * l + bl));
        }
    }
}

pub fn spatial_gradient(x: &ImageTensor) -> GradientField {
    spatial_gradient_with(x, GradientMode::Luminance)
}

pub fn spatial_gradient_with(x: &ImageTensor, mode: GradientMode) -> GradientField {
    let src = match mode {
        GradientMode::Luminance => x.luminance(),
        GradientMode::PerChannel => x.planes().clone(),
    };
    let (c, h, w) = src.shape();
    let mut g0 = Planes::zeros(c, h, w);
    let mut g1 = Planes::zeros(c, h, w);
    for ch in 0..c {
        sobel_plane(src.plane(ch), h, w, g0.plane_mut(ch), g1.plane_mut(ch));
    }
    let magnitude = Planes::from_fn(c, h, w, |ch, y, x| g0.get(ch, y, x).hypot(g1.get(ch, y, x)));
    GradientField { g0, g1, magnitude }
}
