//! Matched-level JND injection: `y0 = clip(x0 + ε·r·xj)` with ε bisected so
//! that the post-clip PSNR hits a target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::JndMap;
use crate::imaging::{mse, psnr_from_mse, ImageTensor, Planes};

/// Matched PSNR level used for model comparisons.
pub const MATCHED_PSNR_DB: f64 = 26.06;

/// Random ±1 signs from a seeded ChaCha8 stream, in CHW order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherField {
    pub seed: u64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    signs: Vec<i8>,
}

impl RademacherField {
    pub fn new(seed: u64, channels: usize, height: usize, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..channels * height * width)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self {
            seed,
            channels,
            height,
            width,
            signs,
        }
    }

    pub fn for_image(seed: u64, x: &ImageTensor) -> Self {
        let (c, h, w) = x.shape();
        Self::new(seed, c, h, w)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn negated(&self) -> Self {
        Self {
            signs: self.signs.iter().map(|s| -s).collect(),
            ..self.clone()
        }
    }
}

fn check_shapes(x0: &ImageTensor, xj: &JndMap, r: &RademacherField) -> Result<()> {
    x0.planes().ensure_same_shape(xj.values(), "inject")?;
    if r.shape() != x0.shape() {
        return Err(Error::Shape(format!(
            "sign field {:?} does not match image {:?}",
            r.shape(),
            x0.shape()
        )));
    }
    Ok(())
}

/// Injected image and the fraction of elements altered by clipping.
fn inject_counting(x0: &ImageTensor, xj: &JndMap, epsilon: f64, r: &RademacherField) -> (ImageTensor, f64) {
    let mut p = x0.planes().clone();
    let mut clipped = 0usize;
    for ((v, &j), &s) in p.data_mut().iter_mut().zip(xj.values().data()).zip(&r.signs) {
        let raw = *v + epsilon * s as f64 * j;
        let c = raw.clamp(0.0, 1.0);
        clipped += (c != raw) as usize;
        *v = c;
    }
    let n = p.len().max(1) as f64;
    (ImageTensor::clipped(p), clipped as f64 / n)
}

pub fn inject(x0: &ImageTensor, xj: &JndMap, epsilon: f64, r: &RademacherField) -> Result<ImageTensor> {
    check_shapes(x0, xj, r)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidValue(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(inject_counting(x0, xj, epsilon, r).0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Success tolerance on the achieved PSNR.
    pub tolerance_db: f64,
    /// Bisection keeps narrowing until this close (or out of iterations),
    /// so ε itself is resolved well beyond the success tolerance.
    pub precision_db: f64,
    pub max_iterations: usize,
    pub epsilon_max: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            tolerance_db: 0.01,
            precision_db: 1e-7,
            max_iterations: 100,
            epsilon_max: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionResult {
    pub y0: ImageTensor,
    pub epsilon: f64,
    pub achieved_psnr: f64,
    pub target_psnr: f64,
    pub clipped_fraction: f64,
    pub seed: u64,
    pub iterations: usize,
}

fn achieved(x0: &ImageTensor, xj: &JndMap, eps: f64, r: &RademacherField) -> (ImageTensor, f64, f64) {
    let (y, clip) = inject_counting(x0, xj, eps, r);
    let m = mse(&y, x0).expect("shapes checked");
    let p = psnr_from_mse(m).unwrap_or(f64::INFINITY);
    (y, p, clip)
}

pub fn calibrate_epsilon(
    x0: &ImageTensor,
    xj: &JndMap,
    r: &RademacherField,
    target_psnr: f64,
) -> Result<InjectionResult> {
    calibrate_epsilon_with(x0, xj, r, target_psnr, &CalibrationConfig::default())
}

pub fn calibrate_epsilon_with(
    x0: &ImageTensor,
    xj: &JndMap,
    r: &RademacherField,
    target_psnr: f64,
    cfg: &CalibrationConfig,
) -> Result<InjectionResult> {
    check_shapes(x0, xj, r)?;
    if xj.values().data().iter().all(|&v| v == 0.0) {
        return Err(Error::Uncalibratable);
    }
    let (_, floor, _) = achieved(x0, xj, cfg.epsilon_max, r);
    if floor > target_psnr + cfg.tolerance_db {
        return Err(Error::Unreachable {
            target: target_psnr,
            floor,
            epsilon: cfg.epsilon_max,
        });
    }
    // PSNR is non-increasing in ε: lo stays above target, hi below.
    let (mut lo, mut hi) = (0.0, cfg.epsilon_max);
    let mut best: Option<(f64, ImageTensor, f64, f64)> = None;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (y, p, clip) = achieved(x0, xj, mid, r);
        let err = (p - target_psnr).abs();
        if best.as_ref().is_none_or(|b| err < (b.2 - target_psnr).abs()) {
            best = Some((mid, y, p, clip));
        }
        if err <= cfg.precision_db {
            break;
        }
        if p > target_psnr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (epsilon, y0, achieved_psnr, clipped_fraction) = best.expect("at least one iteration");
    if (achieved_psnr - target_psnr).abs() > cfg.tolerance_db {
        return Err(Error::Unreachable {
            target: target_psnr,
            floor: achieved_psnr,
            epsilon,
        });
    }
    Ok(InjectionResult {
        y0,
        epsilon,
        achieved_psnr,
        target_psnr,
        clipped_fraction,
        seed: r.seed,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub image: String,
    pub model: String,
    pub epsilon: f64,
    pub achieved_psnr: f64,
    pub clipped_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairEvaluation {
    pub a: InjectionResult,
    pub b: InjectionResult,
    pub rows: Vec<ReportRow>,
}

/// Calibrates two models' maps on one image with a shared sign field.
pub fn evaluate_pair(
    image: &str,
    x0: &ImageTensor,
    a: (&str, &JndMap),
    b: (&str, &JndMap),
    target_psnr: f64,
    r: &RademacherField,
) -> Result<PairEvaluation> {
    let run = |(name, xj): (&str, &JndMap)| {
        calibrate_epsilon(x0, xj, r, target_psnr).map_err(|e| Error::Model {
            model: name.to_string(),
            source: Box::new(e),
        })
    };
    let ra = run(a)?;
    let rb = run(b)?;
    let row = |name: &str, res: &InjectionResult| ReportRow {
        image: image.to_string(),
        model: name.to_string(),
        epsilon: res.epsilon,
        achieved_psnr: res.achieved_psnr,
        clipped_fraction: res.clipped_fraction,
        seed: res.seed,
    };
    let rows = vec![row(a.0, &ra), row(b.0, &rb)];
    Ok(PairEvaluation { a: ra, b: rb, rows })
}

/// Writes report rows with the header
/// `image,model,epsilon,achieved_psnr,clipped_fraction,seed`.
pub fn write_report<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["image", "model", "epsilon", "achieved_psnr", "clipped_fraction", "seed"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form ε for an unclipped injection: `sqrt(target_mse / mean(xj²))`.
pub fn closed_form_epsilon(xj: &Planes, target_psnr: f64) -> f64 {
    let ms = xj.data().iter().map(|v| v * v).sum::<f64>() / xj.len() as f64;
    (crate::imaging::mse_from_psnr(target_psnr) / ms).sqrt()
}
