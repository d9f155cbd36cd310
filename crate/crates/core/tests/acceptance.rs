//! Acceptance criteria for the core library. Each prints one PASS/FAIL line.
//!
//! `cargo test -p hvsjnd --test acceptance -- <filter>` runs the criteria
//! whose name contains `<filter>`. Criteria that need a trained codec share
//! the one produced by the codec convergence run; set
//! `HVSJND_ACCEPTANCE_CODEC=<ckpt>` to load it instead when that run is
//! filtered out, and `HVSJND_ACCEPTANCE_SAVE_CODEC=<ckpt>` to keep it.

use std::cell::{Cell, OnceCell};
use std::path::PathBuf;
use std::time::Instant;

use hvsjnd::codec::{train_codec, CodecArch, CodecModel, CodecTrainConfig};
use hvsjnd::generator::{
    generate, generator_input, Ablation, ExternalPrior, GeneratorArch, GeneratorModel, JndMap,
    JndTrainConfig, JndTrainer,
};
use hvsjnd::gradcam::{cam_map, prior_maps};
use hvsjnd::imaging::{mse, psnr, spatial_gradient, GradientField, ImageTensor, Planes};
use hvsjnd::inject::{calibrate_epsilon, closed_form_epsilon, inject, RademacherField, MATCHED_PSNR_DB};
use hvsjnd::loss::{magnitude_loss, magnitude_loss_with_grad, magnitude_term, DEFAULT_T0};
use hvsjnd::nn::module::content_hash;
use hvsjnd::nn::Tensor;
use hvsjnd::pipeline::synthetic::{quadrant_composite, scenes};
use hvsjnd::pipeline::Checkpoint;
use hvsjnd::subjective::{
    mean_std, render_table, summarize, ImageStore, NextPair, Observation, Plan, ScoreStore, SubjectiveService,
    TrialSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Ctx) -> Outcome, f64);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const DESK_IMAGES: usize = 8;
const DESK_SIDE: usize = 176;
const DESK_SEED: u64 = 7;

fn desk_images() -> Vec<ImageTensor> {
    scenes(DESK_SEED, DESK_IMAGES, DESK_SIDE, DESK_SIDE)
}

struct Ctx {
    codec: OnceCell<Result<CodecModel, String>>,
    /// Seconds spent producing the shared codec.
    codec_secs: Cell<f64>,
}

impl Ctx {
    /// The trained desk-scale codec (trains it on first use).
    fn codec(&self) -> Result<&CodecModel, String> {
        self.codec
            .get_or_init(|| {
                let start = Instant::now();
                let codec = match std::env::var_os("HVSJND_ACCEPTANCE_CODEC") {
                    Some(p) => Checkpoint::load(&PathBuf::from(p)).and_then(|c| c.codec()).map_err(e2s),
                    None => train_desk_codec().map(|(m, _)| m),
                };
                self.codec_secs.set(start.elapsed().as_secs_f64());
                codec
            })
            .as_ref()
            .map_err(|e| format!("desk codec unavailable: {e}"))
    }
}

fn train_desk_codec() -> Result<(CodecModel, Vec<f64>), String> {
    let cfg = CodecTrainConfig {
        steps: 2000,
        crop: DESK_SIDE,
        batch: 1,
        ..Default::default()
    };
    let images = desk_images();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut trainer = train_codec(&images, &cfg, CodecArch::default(), |_, row| {
        losses.push(row.loss);
        Ok(())
    })
    .map_err(e2s)?;
    trainer.finish(&images).map_err(e2s)?;
    if let Some(p) = std::env::var_os("HVSJND_ACCEPTANCE_SAVE_CODEC") {
        Checkpoint::from_codec(&trainer.model, &trainer.config, &trainer.trace, None)
            .and_then(|c| c.save(&PathBuf::from(p)))
            .map_err(e2s)?;
    }
    Ok((trainer.model, losses))
}

// Loss1 is nonnegative everywhere and vanishes exactly at |xj| = G.
fn loss1_nonnegativity(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut min_term = f64::INFINITY;
    let mut max_at_min = 0.0f64;
    for _ in 0..10_000 {
        let g: f64 = rng.random_range(0.0..1.0);
        let x: f64 = rng.random_range(-1.0..1.0);
        let t0 = 10f64.powf(rng.random_range(-8.0..0.0));
        let v = magnitude_term(g, x, t0);
        min_term = min_term.min(v);
        check(v >= -1e-9, || format!("term {v} at G={g} x={x} t0={t0}"))?;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let at = magnitude_term(g, sign * g, t0).abs();
        max_at_min = max_at_min.max(at);
        check(at <= 1e-9, || format!("term {at} at |x|=G={g} t0={t0}"))?;
    }
    Ok(format!("min term {min_term:.3e}, max |term| at |xj|=G {max_at_min:.1e}"))
}

// Analytic Loss1 gradient against central differences.
fn loss1_gradient(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let xj = Planes::from_fn(3, 4, 4, |_, _, _| {
            let m: f64 = rng.random_range(1e-2..0.3);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        });
        let mag = Planes::from_fn(1, 4, 4, |_, _, _| rng.random_range(0.0..0.5));
        let field = GradientField {
            g0: mag.clone(),
            g1: Planes::zeros(1, 4, 4),
            magnitude: mag,
        };
        let (_, grad) = magnitude_loss_with_grad(&xj, &field, DEFAULT_T0).map_err(e2s)?;
        for i in 0..xj.len() {
            let mut p = xj.clone();
            p.data_mut()[i] += h;
            let mut m = xj.clone();
            m.data_mut()[i] -= h;
            let fd = (magnitude_loss(&p, &field, DEFAULT_T0).map_err(e2s)?
                - magnitude_loss(&m, &field, DEFAULT_T0).map_err(e2s)?)
                / (2.0 * h);
            let a = grad.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.2e} over 20 maps"))
}

// Matched-PSNR calibration on 12 images with a fixed generator checkpoint,
// plus the closed-form case.
fn psnr_calibration(ctx: &Ctx) -> Outcome {
    let codec = ctx.codec()?;
    let dir = tempfile::tempdir().map_err(e2s)?;
    let path = dir.path().join("generator.ckpt");
    let fixed = GeneratorModel::new(GeneratorArch::default(), 11);
    Checkpoint::from_generator(&fixed, &content_hash(codec), &(), &Vec::<()>::new(), None)
        .and_then(|c| c.save(&path))
        .map_err(e2s)?;
    let generator = Checkpoint::load(&path).and_then(|c| c.generator()).map_err(e2s)?;
    let mut worst = 0.0f64;
    for (i, x) in scenes(99, 12, DESK_SIDE, DESK_SIDE).iter().enumerate() {
        let xj = generate(&generator, x, &prior_maps(codec, x).map_err(e2s)?).map_err(e2s)?;
        let r = RademacherField::for_image(i as u64, x);
        let res = calibrate_epsilon(x, &xj, &r, MATCHED_PSNR_DB).map_err(e2s)?;
        let err = (res.achieved_psnr - MATCHED_PSNR_DB).abs();
        let direct = psnr(x, &res.y0).map_err(e2s)?;
        check(err <= 0.01 && (direct - res.achieved_psnr).abs() < 1e-9, || {
            format!("image {i}: achieved {:.4} dB (recomputed {direct:.4})", res.achieved_psnr)
        })?;
        worst = worst.max(err);
    }
    let x0 = ImageTensor::filled(3, 64, 64, 0.5).map_err(e2s)?;
    let c = 0.05;
    let xj = JndMap::new(Planes::filled(3, 64, 64, c)).map_err(e2s)?;
    let r = RademacherField::for_image(3, &x0);
    let res = calibrate_epsilon(&x0, &xj, &r, MATCHED_PSNR_DB).map_err(e2s)?;
    let closed = hvsjnd::imaging::mse_from_psnr(MATCHED_PSNR_DB).sqrt() / c;
    check((closed - closed_form_epsilon(xj.values(), MATCHED_PSNR_DB)).abs() < 1e-12, || "closed form helper".into())?;
    let rel = (res.epsilon - closed).abs() / closed;
    check(res.clipped_fraction == 0.0 && rel < 5e-5, || {
        format!("bisection eps {} vs closed form {closed} (rel {rel:.2e})", res.epsilon)
    })?;
    Ok(format!(
        "12/12 within {worst:.2e} dB of {MATCHED_PSNR_DB}; closed form eps {closed:.6} vs {:.6}",
        res.epsilon
    ))
}

// With no clipping the achieved MSE is eps^2 * mean(xj^2).
fn injection_identity(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (h, w) = (rng.random_range(4..24), rng.random_range(4..24));
        let x0 = ImageTensor::from_fn(3, h, w, |_, _, _| rng.random_range(0.3..0.7));
        let xj = JndMap::new(Planes::from_fn(3, h, w, |_, _, _| rng.random_range(0.0..0.05))).map_err(e2s)?;
        let eps: f64 = rng.random_range(0.01..3.0);
        let r = RademacherField::for_image(case, &x0);
        let y0 = inject(&x0, &xj, eps, &r).map_err(e2s)?;
        let clipped = x0
            .data()
            .iter()
            .zip(xj.values().data())
            .zip(r.signs())
            .filter(|((x, j), s)| !(0.0..=1.0).contains(&(**x + eps * **s as f64 * **j)))
            .count();
        check(clipped == 0, || format!("case {case} clipped"))?;
        let expected = eps * eps * xj.mean_square();
        let got = mse(&x0, &y0).map_err(e2s)?;
        let rel = (got - expected).abs() / expected;
        worst = worst.max(rel);
        check(rel <= 1e-6, || format!("case {case}: mse {got} vs {expected}"))?;
    }
    Ok(format!("100 cases, max relative deviation {worst:.2e}"))
}

// Desk-scale codec convergence.
fn codec_convergence(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let (model, losses) = train_desk_codec()?;
    let psnr = model.state.fidelity_psnr.unwrap_or(f64::NAN);
    let windows: Vec<f64> = losses.chunks(200).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let increases: Vec<usize> = windows.windows(2).enumerate().filter(|(_, w)| w[1] > w[0]).map(|(i, _)| i + 1).collect();
    let shown: Vec<String> = windows.iter().map(|w| format!("{w:.0}")).collect();
    let detail = format!(
        "eval PSNR {psnr:.2} dB after {} steps in {:.0}s; 200-step mean loss [{}]",
        model.state.steps,
        start.elapsed().as_secs_f64(),
        shown.join(", ")
    );
    let _ = ctx.codec.set(Ok(model));
    check(psnr >= 35.0, || format!("{detail}: below 35 dB"))?;
    check(increases.is_empty(), || format!("{detail}: loss rose in windows {increases:?}"))?;
    Ok(detail)
}

// Analysis/synthesis halve and double the sides exactly.
fn shape_contracts(_: &Ctx) -> Outcome {
    let model = CodecModel::new(CodecArch::default(), 0);
    let n = model.arch.channels;
    for w in [16usize, 176, 512] {
        let x = Tensor::zeros(3, w, w);
        let a = model.analysis_trace(&x).map_err(e2s)?;
        let expect = [(n, w / 2, w / 2), (n, w / 4, w / 4), (n, w / 8, w / 8)];
        check(a.stage_shapes() == expect, || format!("w={w}: analysis {:?}", a.stage_shapes()))?;
        let s = model.synthesis_trace(&a.latent).map_err(e2s)?;
        let expect = [(n, w / 4, w / 4), (n, w / 2, w / 2), (3, w, w)];
        check(s.stage_shapes() == expect, || format!("w={w}: synthesis {:?}", s.stage_shapes()))?;
    }
    // A side that is not a multiple of 8 is padded to 512 and cropped back.
    let x = ImageTensor::filled(3, 509, 505, 0.4).map_err(e2s)?;
    let tr = model.degrade_trace(&Tensor::from(x.planes()), hvsjnd::codec::QuantMode::Eval).map_err(e2s)?;
    check(tr.analysis.latent.shape() == (n, 64, 64), || format!("padded latent {:?}", tr.analysis.latent.shape()))?;
    check(tr.output.shape() == (3, 509, 505), || format!("output {:?}", tr.output.shape()))?;
    Ok("w in {16, 176, 512}: w/2, w/4, w/8 and back; 509x505 pads to 512".into())
}

const SMOKE_CROP: usize = 64;

// 50 JND steps against the frozen codec.
fn frozen_codec_contract(ctx: &Ctx) -> Outcome {
    let codec = ctx.codec()?;
    let images = desk_images();
    let cfg = JndTrainConfig {
        steps: 50,
        batch: 32,
        crop: SMOKE_CROP,
        lr: 1e-5,
        ..Default::default()
    };
    let w = cfg.weights;
    check((w.alpha, w.beta, w.gamma) == (0.1, 1.0, 0.1), || format!("weights {w:?}"))?;
    let start = Instant::now();
    let frozen = content_hash(codec);
    let mut rows = Vec::new();
    let trainer = hvsjnd::generator::train_jnd(codec, &images, None, &cfg, GeneratorArch::default(), |t, row| {
        if content_hash(codec) != frozen || t.codec_hash() != frozen {
            return Err(hvsjnd::Error::FrozenModified(format!("step {}", row.step)));
        }
        rows.push(*row);
        Ok(())
    })
    .map_err(e2s)?;
    check(rows.len() == 50, || format!("{} steps recorded", rows.len()))?;
    let bad: Vec<usize> = rows
        .iter()
        .filter(|r| ![r.loss1, r.loss2, r.loss3, r.total].iter().all(|v| v.is_finite()))
        .map(|r| r.step)
        .collect();
    check(bad.is_empty(), || format!("non-finite losses at steps {bad:?}"))?;
    let untouched = trainer.untouched_parameters();
    check(untouched.is_empty(), || format!("never received a gradient: {untouched:?}"))?;
    Ok(format!(
        "hash {} unchanged over 50 steps; coverage {:.3}; total {:.4} -> {:.4}; {:.0}s",
        &frozen[..12],
        trainer.gradient_coverage(),
        rows[0].total,
        rows[49].total,
        start.elapsed().as_secs_f64()
    ))
}

fn external_priors(images: &[ImageTensor]) -> Vec<ExternalPrior> {
    images
        .iter()
        .map(|x| {
            let lum = x.luminance();
            ExternalPrior {
                attention: lum.map(|v| (1.0 - v).powi(2)),
                contrast: spatial_gradient(x).magnitude.clone(),
            }
        })
        .map(|mut e| {
            if e.contrast.channels() != 1 {
                let c = e.contrast.clone();
                e.contrast = Planes::from_fn(1, c.height(), c.width(), |_, y, x| c.get(0, y, x));
            }
            e
        })
        .collect()
}

// Each ablation switch changes only its designated term.
fn ablation_switches(ctx: &Ctx) -> Outcome {
    let codec = ctx.codec()?;
    let images = desk_images();
    let external = external_priors(&images);
    let arch = GeneratorArch::default();
    let run = |ablation: Ablation| -> Result<hvsjnd::loss::LossBreakdown, String> {
        let cfg = JndTrainConfig {
            batch: 4,
            crop: SMOKE_CROP,
            ablation,
            ..Default::default()
        };
        let t = JndTrainer::new(cfg, codec, GeneratorModel::new(arch.clone(), 5)).map_err(e2s)?;
        let specs = t.crop_specs(&images, 0);
        Ok(t.evaluate_batch(codec, &images, Some(&external), &specs).map_err(e2s)?.0)
    };
    let base = run(Ablation::None)?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);

    let p = run(Ablation::BlP)?;
    check(same(p.loss1, base.loss1) && same(p.loss3, base.loss3) && !same(p.loss2, base.loss2), || {
        format!("bl-p: {base:?} vs {p:?}")
    })?;

    let l3 = run(Ablation::BlL3)?;
    check(
        same(l3.loss1, base.loss1)
            && same(l3.loss2, base.loss2)
            && same(l3.loss3, base.loss3)
            && same(base.total - l3.total, base.weights.gamma * base.loss3)
            && l3.weights.gamma == 0.0,
        || format!("bl-l3: {base:?} vs {l3:?}"),
    )?;

    // BL-CAM replaces the prior channels of the generator input, nothing else.
    let x = images[0].crop(0, 0, SMOKE_CROP, SMOKE_CROP).map_err(e2s)?;
    let own = prior_maps(codec, &x).map_err(e2s)?;
    let spec = hvsjnd::pipeline::CropSpec { image: 0, top: 0, left: 0 };
    let ext = external[0].crop(&spec, SMOKE_CROP).map_err(e2s)?.to_priors(own.target_scalar).map_err(e2s)?;
    let a = generator_input(&x, &own).map_err(e2s)?;
    let b = generator_input(&x, &ext).map_err(e2s)?;
    let plane = |t: &Tensor, c: usize| t.plane(c).to_vec();
    check((0..3).all(|c| plane(&a, c) == plane(&b, c)), || "bl-cam altered image channels".into())?;
    check((3..7).all(|c| plane(&a, c) != plane(&b, c)), || "bl-cam left a prior channel unchanged".into())?;
    let cam = run(Ablation::BlCam)?;
    check(cam.all_finite() && !same(cam.loss2, base.loss2), || format!("bl-cam: {base:?} vs {cam:?}"))?;
    Ok(format!(
        "bl-p moves loss2 {:.5}->{:.5}; bl-l3 drops {:.3e} from total; bl-cam swaps prior channels 3..7",
        base.loss2,
        p.loss2,
        base.total - l3.total
    ))
}

// CAM range, shape, determinism and texture preference.
fn cam_properties(ctx: &Ctx) -> Outcome {
    let codec = ctx.codec()?;
    let side = DESK_SIDE;
    let x = quadrant_composite(3, side);
    let cam = cam_map(codec, &x).map_err(e2s)?;
    check(cam.shape() == (1, side, side), || format!("shape {:?}", cam.shape()))?;
    check(cam.data().iter().all(|v| (0.0..=1.0).contains(v)), || "values outside [0, 1]".into())?;
    check(cam_map(codec, &x).map_err(e2s)? == cam, || "not deterministic".into())?;
    let h = side / 2;
    let quad = |ty: usize, tx: usize| {
        let mut s = 0.0;
        for y in ty..ty + h {
            for xx in tx..tx + h {
                s += cam.get(0, y, xx);
            }
        }
        s / (h * h) as f64
    };
    let textured = quad(0, 0);
    let flats = [quad(0, h), quad(h, 0), quad(h, h)];
    let max_flat = flats.iter().cloned().fold(f64::MIN, f64::max);
    let detail = format!("textured mean {textured:.4}, flat means {:.4}/{:.4}/{:.4}", flats[0], flats[1], flats[2]);
    check(textured > max_flat, || detail.clone())?;
    Ok(detail)
}

// Mean/std arithmetic, placement invariance and table layout.
fn summary_math(_: &Ctx) -> Outcome {
    check(mean_std(&[3.0, 2.0, 1.0]).map_err(e2s)? == (2.0, 1.0), || "{3,2,1}".into())?;
    let obs = |scores: &[f64]| -> Vec<Observation> {
        scores
            .iter()
            .map(|&score| Observation {
                image_id: "P1".into(),
                comparison: "Ours VS. Liu2010".into(),
                score,
            })
            .collect()
    };
    let row = &summarize(&obs(&[3.0, 2.0, 1.0]), None).rows[0];
    check((row.mean, row.std, row.n) == (2.0, 1.0, 3), || format!("summarize {{3,2,1}}: {row:?}"))?;
    let specs = |seed: u64| {
        let mut images = ImageStore::default();
        let specs = (0..12)
            .map(|i| TrialSpec {
                pair_id: format!("p{i}"),
                image_id: format!("P{}", i + 1),
                comparison: "Ours VS. Liu2010".into(),
                candidate_model: "ours".into(),
                anchor_model: "Liu2010".into(),
                candidate_image: format!("c{i}").into_bytes(),
                anchor_image: format!("a{i}").into_bytes(),
            })
            .collect();
        let plan = Plan::new(specs, seed, &mut images).map_err(e2s)?;
        Ok::<_, String>(SubjectiveService::new(plan, images, ScoreStore::in_memory(), seed))
    };
    let mut stored = Vec::new();
    let mut placements = Vec::new();
    for seed in [1u64, 2] {
        let mut svc = specs(seed)?;
        placements.push(svc.plan().trials.iter().map(|t| t.placement).collect::<Vec<_>>());
        let id = svc.create_session("rater").map_err(e2s)?.session_id;
        for pair in svc.session_order(&id).map_err(e2s)? {
            let NextPair::Trial { token, .. } = svc.next_pair(&id).map_err(e2s)? else {
                return Err("session ended early".into());
            };
            let t = svc.plan().trial(&pair).ok_or("unknown pair")?.clone();
            // The rater prefers the candidate by (index mod 4) - 1, wherever it is.
            let k = (pair[1..].parse::<i8>().map_err(e2s)? % 4) - 1;
            svc.submit_score(&id, &token, t.placement.orient(k) as i64).map_err(e2s)?;
        }
        let mut s: Vec<(String, i8)> = svc.store().current().into_iter().map(|r| (r.pair_id, r.stored_score)).collect();
        s.sort();
        stored.push((s, svc.summary()));
    }
    check(placements[0] != placements[1], || "placements did not differ".into())?;
    check(stored[0] == stored[1], || "stored scores depend on placement".into())?;
    let md = render_table(&summarize(&obs(&[3.0, 2.0, 1.58]), None));
    let lines: Vec<&str> = md.lines().collect();
    let expected = [
        "| Index | Ours VS. Liu2010 | |",
        "|  | Mean | Std |",
        "|---|---|---|",
        "| P1 | 2.19 | 0.73 |",
        "| **Average** | **2.19** | - |",
    ];
    check(lines == expected, || format!("table:\n{md}"))?;
    Ok("{3,2,1} -> 2.0/1.0; flipped placements store identical scores; table row shape".into())
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    // Runtime budgets in seconds. Producing the shared codec is not charged
    // to the criterion that first asks for it, except the convergence run.
    let criteria: [Criterion; 10] = [
        ("loss1_nonnegativity", loss1_nonnegativity, 10.0),
        ("loss1_gradient", loss1_gradient, 30.0),
        ("injection_identity", injection_identity, 10.0),
        ("shape_contracts", shape_contracts, f64::INFINITY),
        ("summary_math", summary_math, 1.0),
        ("codec_convergence", codec_convergence, 4.0 * 3600.0),
        ("psnr_calibration", psnr_calibration, 60.0),
        ("frozen_codec_contract", frozen_codec_contract, 600.0),
        ("ablation_switches", ablation_switches, 300.0),
        ("cam_properties", cam_properties, 60.0),
    ];
    let ctx = Ctx {
        codec: OnceCell::new(),
        codec_secs: Cell::new(0.0),
    };
    let (mut passed, mut failed) = (0, Vec::new());
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let trained_before = ctx.codec.get().is_some();
        let start = Instant::now();
        let outcome = f(&ctx);
        let mut secs = start.elapsed().as_secs_f64();
        if !trained_before && name != "codec_convergence" {
            secs -= ctx.codec_secs.get();
        }
        let outcome = outcome.and_then(|d| {
            if secs <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; took {secs:.1}s, budget {budget:.0}s"))
            }
        });
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {name} ({secs:.1}s): {detail}");
            }
            Err(why) => {
                failed.push(name);
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {passed} passed, {} failed", failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
