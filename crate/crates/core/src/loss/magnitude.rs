use crate::error::{Error, Result};
use crate::imaging::{GradientField, Planes};

pub const DEFAULT_T0: f64 = 1e-4;

fn check(xj: &Planes, g: &Planes, t0: f64) -> Result<()> {
    if !(t0 > 0.0) {
        return Err(Error::Config(format!("t0 must be positive, got {t0}")));
    }
    if g.height() != xj.height() || g.width() != xj.width() || (g.channels() != 1 && g.channels() != xj.channels()) {
        return Err(Error::Shape(format!(
            "gradient magnitude {:?} incompatible with map {:?}",
            g.shape(),
            xj.shape()
        )));
    }
    Ok(())
}

/// Elementwise `ln(G² + x² + t0) − ln(2G|x| + t0)`.
#[inline]
pub fn magnitude_term(g: f64, x: f64, t0: f64) -> f64 {
    (g * g + x * x + t0).ln() - (2.0 * g * x.abs() + t0).ln()
}

/// Derivative of [`magnitude_term`] in `x`, with subgradient 0 for `|x|` at 0.
#[inline]
pub fn magnitude_term_grad(g: f64, x: f64, t0: f64) -> f64 {
    let sign = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    2.0 * x / (g * g + x * x + t0) - 2.0 * g * sign / (2.0 * g * x.abs() + t0)
}

fn magnitude_plane(grad: &GradientField, c: usize) -> &[f64] {
    let m = &grad.magnitude;
    m.plane(if m.channels() == 1 { 0 } else { c })
}

/// Mean magnitude loss. A one-channel `G` is broadcast over the channels of `xj`.
pub fn magnitude_loss(xj: &Planes, grad: &GradientField, t0: f64) -> Result<f64> {
    check(xj, &grad.magnitude, t0)?;
    let mut sum = 0.0;
    for c in 0..xj.channels() {
        for (&x, &g) in xj.plane(c).iter().zip(magnitude_plane(grad, c)) {
            sum += magnitude_term(g, x, t0);
        }
    }
    Ok(sum / xj.len() as f64)
}

/// Loss value and its gradient with respect to `xj`.
pub fn magnitude_loss_with_grad(xj: &Planes, grad: &GradientField, t0: f64) -> Result<(f64, Planes)> {
    check(xj, &grad.magnitude, t0)?;
    let n = xj.len() as f64;
    let mut d = Planes::zeros(xj.channels(), xj.height(), xj.width());
    let mut sum = 0.0;
    for c in 0..xj.channels() {
        let gp = magnitude_plane(grad, c);
        for ((dx, &x), &g) in d.plane_mut(c).iter_mut().zip(xj.plane(c)).zip(gp) {
            sum += magnitude_term(g, x, t0);
            *dx = magnitude_term_grad(g, x, t0) / n;
        }
    }
    Ok((sum / n, d))
}
