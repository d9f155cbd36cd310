//! Gaussian-window SSIM over valid windows, mean-pooled over the map and
//! channels, with its analytic gradient in the second argument.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Planes;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimConfig {
    fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let k: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - r).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }
}

/// Separable valid correlation of an `h × w` plane.
fn filter_valid(p: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_valid_adjoint(d: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let v = d[y * ow + x];
            for i in 0..n {
                rows[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for i in 0..n {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn check(a: &Planes, b: &Planes, cfg: &SsimConfig) -> Result<()> {
    a.ensure_same_shape(b, "ssim")?;
    if a.height() < cfg.window || a.width() < cfg.window {
        return Err(Error::Shape(format!(
            "ssim needs sides >= {}, got {}x{}",
            cfg.window, a.height(), a.width()
        )));
    }
    Ok(())
}

struct Stats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn stats(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> Stats {
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, k);
    let mu_b = filter_valid(b, h, w, k);
    let paa = filter_valid(&prod(&|x, _| x * x), h, w, k);
    let pbb = filter_valid(&prod(&|_, y| y * y), h, w, k);
    let pab = filter_valid(&prod(&|x, y| x * y), h, w, k);
    let var_a = paa.iter().zip(&mu_a).map(|(p, m)| p - m * m).collect();
    let var_b = pbb.iter().zip(&mu_b).map(|(p, m)| p - m * m).collect();
    let cov = pab.iter().zip(mu_a.iter().zip(&mu_b)).map(|(p, (x, y))| p - x * y).collect();
    Stats {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

pub fn ssim(a: &Planes, b: &Planes, cfg: &SsimConfig) -> Result<f64> {
    Ok(ssim_impl(a, b, cfg, false)?.0)
}

/// SSIM and its gradient with respect to `b`.
pub fn ssim_with_grad(a: &Planes, b: &Planes, cfg: &SsimConfig) -> Result<(f64, Planes)> {
    let (v, g) = ssim_impl(a, b, cfg, true)?;
    Ok((v, g.expect("gradient requested")))
}

fn ssim_impl(a: &Planes, b: &Planes, cfg: &SsimConfig, want_grad: bool) -> Result<(f64, Option<Planes>)> {
    check(a, b, cfg)?;
    let k = cfg.kernel();
    let (h, w) = (a.height(), a.width());
    let m = (h - cfg.window + 1) * (w - cfg.window + 1);
    let norm = 1.0 / (m * a.channels()) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Planes::zeros(a.channels(), h, w));
    for c in 0..a.channels() {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let s = stats(pa, pb, h, w, &k);
        let mut d_mu = vec![0.0; m];
        let mut d_pab = vec![0.0; m];
        let mut d_pbb = vec![0.0; m];
        for i in 0..m {
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            let a1 = 2.0 * ma * mb + cfg.c1;
            let a2 = 2.0 * s.cov[i] + cfg.c2;
            let b1 = ma * ma + mb * mb + cfg.c1;
            let b2 = s.var_a[i] + s.var_b[i] + cfg.c2;
            let v = a1 * a2 / (b1 * b2);
            total += v;
            if grad.is_some() {
                // Independent variables: mu_b, E[ab], E[b²].
                d_mu[i] = norm * ((2.0 * ma * a2 - 2.0 * ma * a1) / (b1 * b2) - v * (2.0 * mb / b1 - 2.0 * mb / b2));
                d_pab[i] = norm * 2.0 * a1 / (b1 * b2);
                d_pbb[i] = -norm * v / b2;
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = filter_valid_adjoint(&d_mu, h, w, &k);
            let gab = filter_valid_adjoint(&d_pab, h, w, &k);
            let gbb = filter_valid_adjoint(&d_pbb, h, w, &k);
            for (i, out) in g.plane_mut(c).iter_mut().enumerate() {
                *out = gm[i] + pa[i] * gab[i] + 2.0 * pb[i] * gbb[i];
            }
        }
    }
    Ok((total * norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = SsimConfig::default().kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..11 {
            assert!((k[i] - k[10 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_identity() {
        let k = SsimConfig::default().kernel();
        let (h, w) = (14, 17);
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..(h - 10) * (w - 10)).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let lhs: f64 = filter_valid(&x, h, w, &k).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = filter_valid_adjoint(&y, h, w, &k).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
