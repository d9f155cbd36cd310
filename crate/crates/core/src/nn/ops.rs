//! Dense kernels: sgemm wrapper and im2col/col2im with padding modes.

use serde::{Deserialize, Serialize};

/// `c = op(a) · op(b) + beta · c` for row-major buffers, `op(a)` being `m × k`
/// and `op(b)` being `k × n`. A transposed operand is stored as its transpose.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe exactly the m×k, k×n and m×n buffers checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Zero,
    /// Out-of-range taps read the nearest edge pixel.
    Replicate,
}

/// Sliding-window geometry of a strided convolution over an `in_h × in_w` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn new(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        let out = |n: usize| (n + 2 * pad - kernel) / stride + 1;
        Self {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            pad,
            out_h: out(in_h),
            out_w: out(in_w),
        }
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, o: usize, k: usize, n: usize, padding: Padding) -> Option<usize> {
        let p = (o * self.stride + k) as isize - self.pad as isize;
        if p >= 0 && (p as usize) < n {
            Some(p as usize)
        } else {
            match padding {
                Padding::Zero => None,
                Padding::Replicate => Some(p.clamp(0, n as isize - 1) as usize),
            }
        }
    }
}

/// Unfolds `x` (`channels × in_h × in_w`) into `rows × cols` patch columns.
pub fn im2col(x: &[f32], g: &Geometry, padding: Padding, cols: &mut [f32]) {
    debug_assert_eq!(x.len(), g.channels * g.in_h * g.in_w);
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let sy = g.source(oy, ky, g.in_h, padding);
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match sy {
                        None => line.fill(0.0),
                        Some(sy) => {
                            let src = &plane[sy * g.in_w..(sy + 1) * g.in_w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match g.source(ox, kx, g.in_w, padding) {
                                    Some(sx) => src[sx],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
pub fn col2im(cols: &[f32], g: &Geometry, padding: Padding, x: &mut [f32]) {
    debug_assert_eq!(x.len(), g.channels * g.in_h * g.in_w);
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let Some(sy) = g.source(oy, ky, g.in_h, padding) else {
                        continue;
                    };
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let dst = &mut plane[sy * g.in_w..(sy + 1) * g.in_w];
                    for (ox, v) in line.iter().enumerate() {
                        if let Some(sx) = g.source(ox, kx, g.in_w, padding) {
                            dst[sx] += v;
                        }
                    }
                }
            }
        }
    }
}
