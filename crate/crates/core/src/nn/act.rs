use super::tensor::Tensor;

/// `max(x, slope·x)` for `0 ≤ slope < 1`.
pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    let mut y = x.clone();
    for v in &mut y.data {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    y
}

/// Gradient of [`leaky_relu`] given its forward input.
pub fn leaky_relu_backward(input: &Tensor, dy: &Tensor, slope: f32) -> Tensor {
    let mut dx = dy.clone();
    for (d, x) in dx.data.iter_mut().zip(&input.data) {
        if *x < 0.0 {
            *d *= slope;
        }
    }
    dx
}

/// Zeroes negative entries in place (guided-backprop gate on backward signals).
pub fn gate_negative(t: &mut Tensor) {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f32) -> f32 {
    if v > 20.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// Bilinear resampling of every channel with half-pixel centres
/// (`align_corners = false`, edges clamped).
pub fn resize_bilinear(x: &Tensor, height: usize, width: usize) -> Tensor {
    let ys = taps(x.height, height);
    let xs = taps(x.width, width);
    let mut y = Tensor::zeros(x.channels, height, width);
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = y.plane_mut(c);
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                let top = src[y0 * x.width + x0] * (1.0 - wx) + src[y0 * x.width + x1] * wx;
                let bot = src[y1 * x.width + x0] * (1.0 - wx) + src[y1 * x.width + x1] * wx;
                dst[oy * width + ox] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    y
}

/// Adjoint of [`resize_bilinear`] back onto an `height × width` grid.
pub fn resize_bilinear_adjoint(dy: &Tensor, height: usize, width: usize) -> Tensor {
    let ys = taps(height, dy.height);
    let xs = taps(width, dy.width);
    let mut dx = Tensor::zeros(dy.channels, height, width);
    for c in 0..dy.channels {
        let src = dy.plane(c);
        let dst = dx.plane_mut(c);
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                let g = src[oy * dy.width + ox];
                dst[y0 * width + x0] += g * (1.0 - wy) * (1.0 - wx);
                dst[y0 * width + x1] += g * (1.0 - wy) * wx;
                dst[y1 * width + x0] += g * wy * (1.0 - wx);
                dst[y1 * width + x1] += g * wy * wx;
            }
        }
    }
    dx
}

fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f32 / dst as f32;
    (0..dst)
        .map(|o| {
            let pos = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_preserves_constants_and_has_adjoint() {
        let x = Tensor::from_vec(1, 2, 2, vec![0.3; 4]);
        let y = resize_bilinear(&x, 16, 16);
        assert!(y.data.iter().all(|v| (v - 0.3).abs() < 1e-6));

        let x = Tensor::from_vec(2, 3, 4, (0..24).map(|i| (i as f32 * 0.7).sin()).collect());
        let probe = Tensor::from_vec(2, 24, 32, (0..2 * 24 * 32).map(|i| (i as f32 * 0.3).cos()).collect());
        let lhs: f64 = resize_bilinear(&x, 24, 32)
            .data
            .iter()
            .zip(&probe.data)
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum();
        let rhs: f64 = resize_bilinear_adjoint(&probe, 3, 4)
            .data
            .iter()
            .zip(&x.data)
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum();
        assert!((lhs - rhs).abs() < 1e-3);
    }

    #[test]
    fn leaky_relu_passes_scaled_negative_gradient() {
        let x = Tensor::from_vec(1, 1, 3, vec![-2.0, 0.0, 3.0]);
        assert_eq!(leaky_relu(&x, 0.2).data, vec![-0.4, 0.0, 3.0]);
        let dy = Tensor::from_vec(1, 1, 3, vec![1.0; 3]);
        assert_eq!(leaky_relu_backward(&x, &dy, 0.2).data, vec![0.2, 1.0, 1.0]);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-100.0) >= 0.0 && sigmoid(100.0) <= 1.0);
        assert!((softplus(0.0) - 2f32.ln()).abs() < 1e-6);
        assert_eq!(softplus(50.0), 50.0);
    }
}
