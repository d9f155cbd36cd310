use hvsjnd::imaging::{spatial_gradient, GradientField, ImageTensor, Planes};
use hvsjnd::loss::*;
use proptest::prelude::*;

fn field(g: Planes) -> GradientField {
    GradientField {
        g0: g.clone(),
        g1: g.clone(),
        magnitude: g,
    }
}

fn oracle_pair() -> (Planes, Planes) {
    let a = Planes::from_fn(3, 20, 24, |c, y, x| ((c * 7 + y * 3 + x * 5) % 13) as f64 / 12.0);
    let b = Planes::from_fn(3, 20, 24, |c, y, x| {
        (a.get(c, y, x) + 0.1 * (y as f64 * 0.7 + x as f64 * 1.3 + c as f64).sin()).clamp(0.0, 1.0)
    });
    (a, b)
}

#[test]
fn loss1_hand_values() {
    let one = |v: f64| Planes::filled(1, 2, 2, v);
    let m = |g: f64, x: f64, t0: f64| magnitude_loss(&one(x), &field(one(g)), t0).unwrap();
    assert!(m(1.0, 1.0, 0.3).abs() < 1e-15);
    assert!((m(1.0, 0.0, 0.01) - 4.615120516841259).abs() < 1e-12);
    assert_eq!(m(0.0, 0.0, 1e-4), 0.0);
}

#[test]
fn loss1_rejects_nonpositive_t0_and_bad_shapes() {
    let x = Planes::zeros(3, 4, 4);
    assert!(magnitude_loss(&x, &field(Planes::zeros(1, 4, 4)), 0.0).is_err());
    assert!(magnitude_loss(&x, &field(Planes::zeros(1, 4, 5)), 1e-4).is_err());
    assert!(magnitude_loss(&x, &field(Planes::zeros(2, 4, 4)), 1e-4).is_err());
}

#[test]
fn loss1_broadcasts_one_channel_gradient() {
    let img = ImageTensor::from_fn(3, 8, 8, |c, y, x| ((c + y * x) % 5) as f64 / 4.0);
    let g = spatial_gradient(&img);
    assert_eq!(g.magnitude.channels(), 1);
    let xj = Planes::filled(3, 8, 8, 0.05);
    let per = Planes::from_fn(3, 8, 8, |_, y, x| g.magnitude.get(0, y, x));
    let a = magnitude_loss(&xj, &g, DEFAULT_T0).unwrap();
    let b = magnitude_loss(&xj, &field(per), DEFAULT_T0).unwrap();
    assert!((a - b).abs() < 1e-15);
}

#[test]
fn loss1_subgradient_is_zero_at_origin_for_the_abs_term() {
    // At x = 0 the only contribution is from the smooth term, which vanishes.
    assert_eq!(magnitude_term_grad(0.7, 0.0, 1e-4), 0.0);
}

#[test]
fn ssim_matches_direct_window_oracle() {
    let (a, b) = oracle_pair();
    let s = ssim(&a, &b, &SsimConfig::default()).unwrap();
    assert!((s - 0.9760595483755876).abs() < 1e-12, "{s}");
    let bank = iqa_bank(&a, &b).unwrap();
    assert!((bank[0] - 0.004620260449054581).abs() < 1e-15);
    assert!((bank[1] - (1.0 - 0.9760595483755876)).abs() < 1e-12);
}

#[test]
fn ssim_of_constant_images_has_closed_form() {
    let a = Planes::filled(3, 16, 16, 0.2);
    let b = Planes::filled(3, 16, 16, 0.8);
    let bank = iqa_bank(&a, &b).unwrap();
    assert!((bank[1] - 0.5293339214821349).abs() < 1e-12);
    assert!((bank[0] - 0.36).abs() < 1e-12);
}

#[test]
fn identical_inputs_cost_nothing_and_mismatches_error() {
    let (a, _) = oracle_pair();
    let bank = iqa_bank(&a, &a).unwrap();
    assert_eq!(bank[0], 0.0);
    assert!(bank[1].abs() < 1e-12);
    assert!(aic_loss(&a, &a, &[0.3, 0.9]).unwrap().abs() < 1e-12);
    assert!(iqa_bank(&a, &Planes::zeros(3, 20, 23)).is_err());
    assert!(aic_loss(&a, &a, &[-0.1, 1.0]).is_err());
    assert!(aic_loss(&a, &a, &[1.0]).is_err());
    assert!(ssim(&Planes::zeros(1, 10, 40), &Planes::zeros(1, 10, 40), &SsimConfig::default()).is_err());
}

#[test]
fn aic_weights_are_linear_and_degenerate_to_mse() {
    let (a, b) = oracle_pair();
    let l = aic_loss(&a, &b, &DEFAULT_AIC_WEIGHTS).unwrap();
    assert!((aic_loss(&a, &b, &[1.0, 1.0]).unwrap() - 2.0 * l).abs() < 1e-15);
    assert!((aic_loss(&a, &b, &[1.0, 0.0]).unwrap() - 0.004620260449054581).abs() < 1e-15);
}

fn central_diff(f: impl Fn(&Planes) -> f64, b: &Planes, i: usize, h: f64) -> f64 {
    let mut p = b.clone();
    p.data_mut()[i] += h;
    let up = f(&p);
    p.data_mut()[i] -= 2.0 * h;
    (up - f(&p)) / (2.0 * h)
}

/// Five-point stencil, O(h⁴). Stays accurate near the Loss1 minimum, where
/// the gradient is tiny and the O(h²) error of [`central_diff`] dominates.
fn five_point_diff(f: impl Fn(&Planes) -> f64, b: &Planes, i: usize, h: f64) -> f64 {
    let at = |k: f64| {
        let mut p = b.clone();
        p.data_mut()[i] += k * h;
        f(&p)
    };
    (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h)
}

#[test]
fn aic_gradient_matches_finite_differences() {
    let (a, b) = oracle_pair();
    let bank = IqaBank::default();
    let (_, g) = aic_loss_with_grad(&bank, &a, &b, &DEFAULT_AIC_WEIGHTS).unwrap();
    for i in (0..b.len()).step_by(37) {
        let n = central_diff(|p| aic_loss(&a, p, &DEFAULT_AIC_WEIGHTS).unwrap(), &b, i, 1e-6);
        let an = g.data()[i];
        assert!((an - n).abs() <= 1e-6 * an.abs().max(n.abs()) + 1e-10, "{i}: {an} vs {n}");
    }
}

#[test]
fn attention_loss_examples_and_gradient() {
    let z = Planes::zeros(1, 5, 5);
    assert_eq!(attention_loss(&z, &Planes::filled(1, 5, 5, 1.0)).unwrap(), 1.0);
    assert_eq!(attention_loss(&z, &Planes::filled(1, 5, 5, 0.5)).unwrap(), 0.25);
    assert_eq!(attention_loss(&z, &z).unwrap(), 0.0);
    let y = Planes::from_fn(1, 5, 5, |_, r, c| (r * 5 + c) as f64 / 24.0);
    let (_, g) = attention_loss_with_grad(&z, &y).unwrap();
    assert!((g.get(0, 4, 4) - 2.0 / 25.0).abs() < 1e-15);
}

#[test]
fn total_loss_examples() {
    let t = total_loss((1.0, 1.0, 1.0), LossWeights::default());
    assert!((t.total - 1.2).abs() < 1e-15);
    assert_eq!(total_loss((0.0, 0.0, 0.0), LossWeights::default()).total, 0.0);
    let bl_l3 = LossWeights {
        gamma: 0.0,
        ..Default::default()
    };
    let t = total_loss((2.0, 3.0, 5.0), bl_l3);
    assert_eq!(t.total, 0.1 * 2.0 + 3.0);
    assert_eq!(t.loss3, 5.0);
    assert!(LossWeights { alpha: -1.0, ..Default::default() }.validate().is_err());
}

#[test]
fn loss2_decreases_monotonically_as_perturbation_shrinks() {
    let (a, b) = oracle_pair();
    let mut prev = f64::INFINITY;
    for k in 0..12 {
        let s = 0.5f64.powi(k);
        let y = Planes::from_fn(3, 20, 24, |c, r, x| a.get(c, r, x) + s * (b.get(c, r, x) - a.get(c, r, x)));
        let l = aic_loss(&a, &y, &DEFAULT_AIC_WEIGHTS).unwrap();
        assert!(l < prev, "step {k}: {l} !< {prev}");
        prev = l;
    }
    assert!(prev < 1e-7);
}

proptest! {
    #[test]
    fn loss1_is_nonnegative_with_equality_on_the_diagonal(
        g in 0.0f64..2.0, x in -2.0f64..2.0, t0 in 1e-8f64..1.0
    ) {
        prop_assert!(magnitude_term(g, x, t0) >= -1e-12);
        prop_assert!(magnitude_term(g, g, t0).abs() < 1e-12);
        prop_assert!(magnitude_term(g, -g, t0).abs() < 1e-12);
    }

    #[test]
    fn aic_is_symmetric(seed in 0u64..1000) {
        let a = Planes::from_fn(3, 16, 16, |c, y, x| (((seed as usize + c * 31 + y * 17 + x * 7) % 23) as f64) / 22.0);
        let b = Planes::from_fn(3, 16, 16, |c, y, x| (((seed as usize * 3 + c * 5 + y * 11 + x * 13) % 19) as f64) / 18.0);
        let ab = aic_loss(&a, &b, &DEFAULT_AIC_WEIGHTS).unwrap();
        let ba = aic_loss(&b, &a, &DEFAULT_AIC_WEIGHTS).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn loss1_gradient_matches_finite_differences(
        xs in proptest::collection::vec(prop_oneof![-1.0f64..-0.01, 0.01f64..1.0], 48),
        gs in proptest::collection::vec(0.0f64..1.0, 16),
    ) {
        let xj = Planes::from_vec(3, 4, 4, xs).unwrap();
        let g = field(Planes::from_vec(1, 4, 4, gs).unwrap());
        let (_, d) = magnitude_loss_with_grad(&xj, &g, DEFAULT_T0).unwrap();
        for i in 0..xj.len() {
            let n = five_point_diff(|p| magnitude_loss(p, &g, DEFAULT_T0).unwrap(), &xj, i, 1e-4);
            let an = d.data()[i];
            // 2h = 2e-4 is tiny next to |xj| > 1e-2, so the kink at 0 is never crossed.
            prop_assert!((an - n).abs() <= 1e-4 * an.abs().max(n.abs()) + 1e-9, "{} vs {}", an, n);
        }
    }
}
