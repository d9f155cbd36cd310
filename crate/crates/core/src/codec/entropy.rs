//! Per-channel non-parametric factorized density over quantized latents.
//!
//! Each channel owns a monotone scalar network `v ↦ logit` built from
//! softplus-positive matrices with tanh gating between layers (widths
//! 1→3→3→3→1). The sigmoid of its output is a cumulative distribution, and the
//! probability mass of an integer bin is `c(v + ½) − c(v − ½)`.

use rand::Rng;

use crate::nn::act::{sigmoid, softplus};
use crate::nn::module::Module;

const WIDTHS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = WIDTHS.len() - 1;
const INIT_SCALE: f64 = 10.0;

/// Smallest per-element likelihood used in rate computation.
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / (1u64 << 50) as f64;

/// Probability mass assigned to an integer-valued latent element.
pub trait LatentDensity {
    fn likelihood(&self, channel: usize, value: f32) -> f64;
}

#[derive(Clone, Debug)]
pub struct FactorizedDensity {
    pub channels: usize,
    /// Per layer: `channels × out × in` raw (pre-softplus) matrices.
    pub matrices: Vec<Vec<f32>>,
    /// Per layer: `channels × out`.
    pub biases: Vec<Vec<f32>>,
    /// Per hidden layer: `channels × out` raw (pre-tanh) gate factors.
    pub factors: Vec<Vec<f32>>,
}

/// Activations of one scalar evaluation, kept for the backward pass.
struct Trace {
    /// Layer inputs, `xs[k]` has `WIDTHS[k]` entries.
    xs: [[f64; 3]; LAYERS + 1],
    /// tanh of the pre-gate activation at hidden layers.
    ts: [[f64; 3]; LAYERS],
}

impl FactorizedDensity {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for k in 0..LAYERS {
            let (i, o) = (WIDTHS[k], WIDTHS[k + 1]);
            let init = (1.0 / scale / o as f64).exp_m1().ln() as f32;
            matrices.push(vec![init; channels * o * i]);
            biases.push((0..channels * o).map(|_| rng.random_range(-0.5..0.5)).collect());
            if k < LAYERS - 1 {
                factors.push(vec![0.0; channels * o]);
            }
        }
        Self {
            channels,
            matrices,
            biases,
            factors,
        }
    }

    fn forward(&self, c: usize, v: f64) -> (f64, Trace) {
        let mut tr = Trace {
            xs: [[0.0; 3]; LAYERS + 1],
            ts: [[0.0; 3]; LAYERS],
        };
        tr.xs[0][0] = v;
        for k in 0..LAYERS {
            let (ni, no) = (WIDTHS[k], WIDTHS[k + 1]);
            let m = &self.matrices[k][c * no * ni..(c + 1) * no * ni];
            let b = &self.biases[k][c * no..(c + 1) * no];
            for o in 0..no {
                let mut z = b[o] as f64;
                for i in 0..ni {
                    z += softplus(m[o * ni + i]) as f64 * tr.xs[k][i];
                }
                if k < LAYERS - 1 {
                    let t = z.tanh();
                    tr.ts[k][o] = t;
                    z += (self.factors[k][c * no + o] as f64).tanh() * t;
                }
                tr.xs[k + 1][o] = z;
            }
        }
        (tr.xs[LAYERS][0], tr)
    }

    /// Accumulates `dlogit · ∂logit/∂θ` into `grad`; returns `∂logit/∂v · dlogit`.
    fn backward(&self, c: usize, tr: &Trace, dlogit: f64, grad: Option<&mut FactorizedDensity>) -> f64 {
        let mut grad = grad;
        let mut dx = [0.0f64; 3];
        dx[0] = dlogit;
        for k in (0..LAYERS).rev() {
            let (ni, no) = (WIDTHS[k], WIDTHS[k + 1]);
            let m = &self.matrices[k][c * no * ni..(c + 1) * no * ni];
            let mut dz = [0.0f64; 3];
            for o in 0..no {
                dz[o] = if k < LAYERS - 1 {
                    let a = self.factors[k][c * no + o] as f64;
                    let ta = a.tanh();
                    let t = tr.ts[k][o];
                    if let Some(g) = grad.as_deref_mut() {
                        g.factors[k][c * no + o] += (dx[o] * t * (1.0 - ta * ta)) as f32;
                    }
                    dx[o] * (1.0 + ta * (1.0 - t * t))
                } else {
                    dx[o]
                };
            }
            let mut dprev = [0.0f64; 3];
            for o in 0..no {
                if let Some(g) = grad.as_deref_mut() {
                    g.biases[k][c * no + o] += dz[o] as f32;
                }
                for i in 0..ni {
                    let raw = m[o * ni + i];
                    if let Some(g) = grad.as_deref_mut() {
                        g.matrices[k][c * no * ni + o * ni + i] +=
                            (dz[o] * tr.xs[k][i] * sigmoid(raw) as f64) as f32;
                    }
                    dprev[i] += softplus(raw) as f64 * dz[o];
                }
            }
            dx = dprev;
        }
        dx[0]
    }

    /// Bits for one element and, unless floored, `∂bits/∂v`; parameter
    /// gradients scaled by `dbits` accumulate into `grad`.
    pub fn bits_with_grad(
        &self,
        c: usize,
        v: f32,
        dbits: f64,
        grad: Option<&mut FactorizedDensity>,
    ) -> (f64, f64, bool) {
        let v = v as f64;
        let (lu, tu) = self.forward(c, v + 0.5);
        let (ll, tl) = self.forward(c, v - 0.5);
        let lik = sigmoid_diff_f64(lu, ll);
        if lik < LIKELIHOOD_FLOOR {
            return (-LIKELIHOOD_FLOOR.log2(), 0.0, true);
        }
        let bits = -lik.log2();
        // d bits / d lik = −1 / (lik ln 2); d lik / d l = σ'(l).
        let dlik = -dbits / (lik * std::f64::consts::LN_2);
        let du = dlik * dsigmoid(lu);
        let dl = -dlik * dsigmoid(ll);
        let mut grad = grad;
        let gv = self.backward(c, &tu, du, grad.as_deref_mut()) + self.backward(c, &tl, dl, grad);
        (bits, gv, false)
    }
}

fn sig64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `σ(u) − σ(l)` evaluated on the side of the sigmoid with less cancellation.
fn sigmoid_diff_f64(u: f64, l: f64) -> f64 {
    if u + l > 0.0 {
        sig64(-l) - sig64(-u)
    } else {
        sig64(u) - sig64(l)
    }
}

fn dsigmoid(x: f64) -> f64 {
    let s = sig64(x);
    s * (1.0 - s)
}

impl LatentDensity for FactorizedDensity {
    fn likelihood(&self, channel: usize, value: f32) -> f64 {
        let v = value as f64;
        let (lu, _) = self.forward(channel, v + 0.5);
        let (ll, _) = self.forward(channel, v - 0.5);
        sigmoid_diff_f64(lu, ll)
    }
}

impl Module for FactorizedDensity {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32])) {
        for (k, m) in self.matrices.iter().enumerate() {
            f(&format!("matrix{k}"), m);
        }
        for (k, b) in self.biases.iter().enumerate() {
            f(&format!("bias{k}"), b);
        }
        for (k, a) in self.factors.iter().enumerate() {
            f(&format!("factor{k}"), a);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32])) {
        for (k, m) in self.matrices.iter_mut().enumerate() {
            f(&format!("matrix{k}"), m);
        }
        for (k, b) in self.biases.iter_mut().enumerate() {
            f(&format!("bias{k}"), b);
        }
        for (k, a) in self.factors.iter_mut().enumerate() {
            f(&format!("factor{k}"), a);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub bits: f64,
    /// Elements whose likelihood fell below [`LIKELIHOOD_FLOOR`].
    pub floored: usize,
}

/// `−Σ log2 p(q)` over a `channels × h × w` latent buffer.
pub fn rate_bits(density: &impl LatentDensity, channels: usize, values: &[f32]) -> RateEstimate {
    let per = values.len() / channels.max(1);
    let mut bits = 0.0;
    let mut floored = 0;
    for c in 0..channels {
        for &v in &values[c * per..(c + 1) * per] {
            let p = density.likelihood(c, v);
            if p < LIKELIHOOD_FLOOR {
                floored += 1;
                bits -= LIKELIHOOD_FLOOR.log2();
            } else {
                bits -= p.log2();
            }
        }
    }
    RateEstimate { bits, floored }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::module::zeros_like;
    use rand::SeedableRng;

    struct UniformBinary;

    impl LatentDensity for UniformBinary {
        fn likelihood(&self, _: usize, v: f32) -> f64 {
            if v == 0.0 || v == 1.0 {
                0.5
            } else {
                0.0
            }
        }
    }

    struct Certain;

    impl LatentDensity for Certain {
        fn likelihood(&self, _: usize, _: f32) -> f64 {
            1.0
        }
    }

    #[test]
    fn uniform_binary_density_costs_one_bit_per_element() {
        let r = rate_bits(&UniformBinary, 2, &[0.0; 10]);
        assert!((r.bits - 10.0).abs() < 1e-12);
        assert_eq!(r.floored, 0);
        assert_eq!(rate_bits(&Certain, 1, &[3.0]).bits, 0.0);
    }

    #[test]
    fn zero_probability_is_floored_and_counted() {
        let r = rate_bits(&UniformBinary, 1, &[0.0, 5.0]);
        assert_eq!(r.floored, 1);
        assert!((r.bits - 51.0).abs() < 1e-9);
    }

    #[test]
    fn masses_sum_to_at_most_one_and_bits_are_nonnegative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let d = FactorizedDensity::new(4, &mut rng);
        for c in 0..4 {
            let total: f64 = (-60..=60).map(|v| d.likelihood(c, v as f32)).sum();
            assert!(total <= 1.0 + 1e-9 && total > 0.9, "channel {c}: {total}");
        }
        let r = rate_bits(&d, 4, &[0.0, 1.0, -3.0, 7.0]);
        assert!(r.bits >= 0.0 && r.bits.is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut d = FactorizedDensity::new(2, &mut rng);
        for f in &mut d.factors {
            for v in f.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let v = 1.3f32;
        let mut g = zeros_like(&d);
        let (_, dv, floored) = d.bits_with_grad(1, v, 1.0, Some(&mut g));
        assert!(!floored);
        let bits = |d: &FactorizedDensity, v: f32| d.bits_with_grad(1, v, 1.0, None).0;
        let h = 1e-3f32;
        let fd = (bits(&d, v + h) - bits(&d, v - h)) / (2.0 * h as f64);
        assert!((fd - dv).abs() < 1e-2 * (1.0 + fd.abs()), "{fd} vs {dv}");
        for (k, idx) in [(0usize, 3usize), (1, 10), (2, 12), (3, 4)] {
            let mut p = d.clone();
            p.matrices[k][idx] += h;
            let up = bits(&p, v);
            p.matrices[k][idx] -= 2.0 * h;
            let dn = bits(&p, v);
            let fd = (up - dn) / (2.0 * h as f64);
            let an = g.matrices[k][idx] as f64;
            assert!((fd - an).abs() < 1e-2 * (1.0 + fd.abs()), "matrix{k}[{idx}]: {fd} vs {an}");
        }
        for (k, idx) in [(0usize, 4usize), (2, 5)] {
            let mut p = d.clone();
            p.factors[k][idx] += h;
            let up = bits(&p, v);
            p.factors[k][idx] -= 2.0 * h;
            let dn = bits(&p, v);
            let fd = (up - dn) / (2.0 * h as f64);
            assert!((fd - g.factors[k][idx] as f64).abs() < 1e-2 * (1.0 + fd.abs()));
        }
        let mut p = d.clone();
        p.biases[3][1] += h;
        let up = bits(&p, v);
        p.biases[3][1] -= 2.0 * h;
        let dn = bits(&p, v);
        let fd = (up - dn) / (2.0 * h as f64);
        assert!((fd - g.biases[3][1] as f64).abs() < 1e-2 * (1.0 + fd.abs()));
    }
}
