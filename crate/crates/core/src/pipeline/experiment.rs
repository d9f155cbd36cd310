//! Two-stage orchestration: train the codec, freeze it, train the generator.
//!
//! Each stage writes its checkpoint every `checkpoint_every` steps, so a
//! diverged or interrupted run keeps its last good state on disk.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::checkpoint::{atomic_write, Checkpoint};
use super::config::ExperimentConfig;
use super::dataset::{ingest, ImageCollection};
use crate::codec::{CodecModel, CodecTraceRow, CodecTrainConfig, CodecTrainer};
use crate::error::{Error, Result};
use crate::generator::{ExternalPrior, GeneratorModel, JndTraceRow, JndTrainConfig, JndTrainer};
use crate::imaging::{load_gray_map, ImageTensor};
use crate::nn::module::content_hash;
use crate::pipeline::dataset::derive_seed;

pub const CODEC_CHECKPOINT: &str = "codec.ckpt";
pub const GENERATOR_CHECKPOINT: &str = "generator.ckpt";
pub const CODEC_TRACE: &str = "codec_trace.csv";
pub const JND_TRACE: &str = "jnd_trace.csv";
pub const SUMMARY: &str = "summary.json";

/// Serializes trace rows as CSV with a header line.
pub fn write_trace<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        return atomic_write(path, b"");
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    atomic_write(path, &bytes)
}

/// Attention and contrast maps for each image, found as
/// `<stem>.attention.png` and `<stem>.contrast.png` in `dir`.
pub fn load_external_priors(dir: &Path, images: &ImageCollection) -> Result<Vec<ExternalPrior>> {
    images
        .images
        .iter()
        .map(|n| {
            let stem = Path::new(&n.name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let load = |kind: &str| -> Result<crate::imaging::Planes> {
                let m = load_gray_map(dir.join(format!("{stem}.{kind}.png")))?;
                if (m.height(), m.width()) != (n.image.height(), n.image.width()) {
                    return Err(Error::Shape(format!(
                        "{kind} map for {} is {}x{}, image is {}x{}",
                        n.name,
                        m.height(),
                        m.width(),
                        n.image.height(),
                        n.image.width()
                    )));
                }
                Ok(m.into_planes())
            };
            Ok(ExternalPrior {
                attention: load("attention")?,
                contrast: load("contrast")?,
            })
        })
        .collect()
}

/// Resuming may extend `steps` or switch execution, nothing else.
/// Where a stage writes and how often.
#[derive(Clone, Copy, Debug)]
pub struct StageOutput<'a> {
    pub checkpoint: &'a Path,
    /// Loss trace CSV, rewritten at every checkpoint.
    pub trace: &'a Path,
    pub checkpoint_every: usize,
    /// Continue from `checkpoint` if it exists.
    pub resume: bool,
}

impl<'a> StageOutput<'a> {
    pub fn new(checkpoint: &'a Path, trace: &'a Path) -> Self {
        Self {
            checkpoint,
            trace,
            checkpoint_every: 100,
            resume: false,
        }
    }
}

fn same_run<T: Serialize + PartialEq + Clone>(saved: &T, current: &T, what: &str) -> Result<()> {
    if saved != current {
        return Err(Error::Config(format!(
            "{what} checkpoint was written with a different configuration; remove it or disable resume"
        )));
    }
    Ok(())
}

/// Stage 1. Returns the trained codec, also saved at `out.checkpoint`.
pub fn run_codec_stage(
    cfg: &CodecTrainConfig,
    arch: crate::codec::CodecArch,
    images: &[ImageTensor],
    out: StageOutput,
) -> Result<CodecModel> {
    if images.is_empty() {
        return Err(Error::Ingest("empty training set".into()));
    }
    if out.checkpoint_every == 0 {
        return Err(Error::Config("checkpoint_every must be positive".into()));
    }
    let mut trainer = if out.resume && out.checkpoint.exists() {
        let ckpt = Checkpoint::load(out.checkpoint)?;
        let model = ckpt.codec()?;
        let saved: CodecTrainConfig = ckpt.config_as()?;
        same_run(
            &CodecTrainConfig {
                execution: cfg.execution,
                steps: cfg.steps,
                ..saved
            },
            cfg,
            "codec",
        )?;
        if model.state.trained {
            info!("codec already trained ({} steps), skipping stage 1", model.state.steps);
            return Ok(model);
        }
        let optimizer = ckpt.optimizer().ok_or_else(|| Error::Checkpoint("codec checkpoint lacks optimizer state".into()))?;
        info!("resuming codec training at step {}", optimizer.step);
        CodecTrainer {
            config: cfg.clone(),
            model,
            optimizer,
            trace: ckpt.trace_as()?,
        }
    } else {
        CodecTrainer::new(cfg.clone(), CodecModel::new(arch, derive_seed(cfg.seed, &[0])))?
    };
    if let Some(i) = images.iter().position(|x| x.height() < cfg.crop || x.width() < cfg.crop) {
        return Err(Error::Config(format!("image {i} is smaller than the {} crop", cfg.crop)));
    }
    let save = |t: &CodecTrainer| -> Result<()> {
        Checkpoint::from_codec(&t.model, &t.config, &t.trace, Some(&t.optimizer))?.save(out.checkpoint)?;
        write_trace(out.trace, &t.trace)
    };
    while trainer.next_step() < cfg.steps {
        let row = trainer.step(images)?;
        if row.step % 50 == 0 {
            info!("codec step {} bpp {:.3} psnr {:.2} dB", row.step, row.rate_bpp, row.psnr);
        }
        if row.step % out.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    trainer.finish(images)?;
    save(&trainer)?;
    Ok(trainer.model)
}

/// Stage 2 against a frozen codec stored at `codec_path`.
pub fn run_jnd_stage(
    cfg: &JndTrainConfig,
    arch: crate::generator::GeneratorArch,
    codec: &CodecModel,
    codec_path: &Path,
    images: &[ImageTensor],
    external: Option<&[ExternalPrior]>,
    out: StageOutput,
) -> Result<JndTrainer> {
    codec.ensure_trained()?;
    if out.checkpoint_every == 0 {
        return Err(Error::Config("checkpoint_every must be positive".into()));
    }
    let frozen = content_hash(codec);
    let mut trainer = if out.resume && out.checkpoint.exists() {
        let ckpt = Checkpoint::load(out.checkpoint)?;
        if ckpt.codec_hash.as_deref() != Some(frozen.as_str()) {
            return Err(Error::FrozenModified(format!(
                "generator checkpoint was trained against codec {:?}, current codec is {frozen}",
                ckpt.codec_hash
            )));
        }
        let saved: JndTrainConfig = ckpt.config_as()?;
        same_run(
            &JndTrainConfig {
                execution: cfg.execution,
                steps: cfg.steps,
                ..saved
            },
            cfg,
            "generator",
        )?;
        let optimizer =
            ckpt.optimizer().ok_or_else(|| Error::Checkpoint("generator checkpoint lacks optimizer state".into()))?;
        info!("resuming generator training at step {}", optimizer.step);
        JndTrainer::resume(cfg.clone(), codec, ckpt.generator()?, optimizer, ckpt.trace_as()?)?
    } else {
        JndTrainer::new(cfg.clone(), codec, GeneratorModel::new(arch, derive_seed(cfg.seed, &[4])))?
    };
    if let Some(i) = images.iter().position(|x| x.height() < cfg.crop || x.width() < cfg.crop) {
        return Err(Error::Config(format!("image {i} is smaller than the {} crop", cfg.crop)));
    }
    let save = |t: &JndTrainer| -> Result<()> {
        // The stored codec must still be the one the generator sees.
        let on_disk = Checkpoint::load(codec_path)?;
        if on_disk.params_hash != t.codec_hash() || content_hash(codec) != t.codec_hash() {
            return Err(Error::FrozenModified(format!(
                "codec changed during generator training (expected {})",
                t.codec_hash()
            )));
        }
        Checkpoint::from_generator(&t.generator, t.codec_hash(), &t.config, &t.trace, Some(&t.optimizer))?
            .save(out.checkpoint)?;
        write_trace(out.trace, &t.trace)
    };
    while trainer.next_step() < cfg.steps {
        let row = trainer.step(codec, images, external)?;
        if row.step % 10 == 0 {
            info!(
                "jnd step {} loss1 {:.4} loss2 {:.4} loss3 {:.4} total {:.4}",
                row.step, row.loss1, row.loss2, row.loss3, row.total
            );
        }
        if row.step % out.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;
    let untouched = trainer.untouched_parameters();
    if !untouched.is_empty() {
        warn!("generator parameters without gradient: {}", untouched.join(", "));
    }
    Ok(trainer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecSummary {
    pub checkpoint: PathBuf,
    pub steps: u64,
    pub fidelity_psnr: Option<f64>,
    pub params_hash: String,
    pub last: Option<CodecTraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSummary {
    pub checkpoint: PathBuf,
    pub steps: usize,
    pub codec_hash: String,
    pub gradient_coverage: f64,
    pub untouched_parameters: Vec<String>,
    pub last: Option<JndTraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub images: Vec<String>,
    pub skipped: Vec<String>,
    pub codec: CodecSummary,
    pub generator: GeneratorSummary,
    pub config: ExperimentConfig,
}

/// Runs both stages as described by `cfg` and writes `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let min_side = if cfg.codec_checkpoint.is_some() { cfg.jnd.crop } else { cfg.codec.crop.max(cfg.jnd.crop) };
    let collection = ingest(&cfg.dataset, min_side)?;
    let images = collection.tensors();
    let external = match &cfg.external_priors {
        Some(dir) => Some(load_external_priors(dir, &collection)?),
        None => None,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut codec_cfg = cfg.codec.clone();
    codec_cfg.execution = cfg.execution;
    let stage = |ckpt: &'static str, trace: &'static str| (cfg.out_dir.join(ckpt), cfg.out_dir.join(trace));
    let (codec, codec_path) = match &cfg.codec_checkpoint {
        Some(path) => {
            let codec = Checkpoint::load(path)?.codec()?;
            codec.ensure_trained()?;
            (codec, path.clone())
        }
        None => {
            let (ckpt, trace) = stage(CODEC_CHECKPOINT, CODEC_TRACE);
            let out = StageOutput {
                checkpoint_every: cfg.checkpoint_every,
                resume: cfg.resume,
                ..StageOutput::new(&ckpt, &trace)
            };
            (run_codec_stage(&codec_cfg, cfg.codec_arch, &images, out)?, ckpt)
        }
    };
    let (gen_ckpt, gen_trace) = stage(GENERATOR_CHECKPOINT, JND_TRACE);
    let mut jnd_cfg = cfg.jnd.clone();
    jnd_cfg.execution = cfg.execution;
    let trainer = run_jnd_stage(
        &jnd_cfg,
        cfg.generator_arch.clone(),
        &codec,
        &codec_path,
        &images,
        external.as_deref(),
        StageOutput {
            checkpoint_every: cfg.checkpoint_every,
            resume: cfg.resume,
            ..StageOutput::new(&gen_ckpt, &gen_trace)
        },
    )?;
    let codec_trace: Vec<CodecTraceRow> = Checkpoint::load(&codec_path)?.trace_as()?;
    let summary = ExperimentSummary {
        images: collection.images.iter().map(|n| n.name.clone()).collect(),
        skipped: collection.diagnostics.clone(),
        codec: CodecSummary {
            checkpoint: codec_path,
            steps: codec.state.steps,
            fidelity_psnr: codec.state.fidelity_psnr,
            params_hash: content_hash(&codec),
            last: codec_trace.last().copied(),
        },
        generator: GeneratorSummary {
            checkpoint: gen_ckpt.clone(),
            steps: trainer.next_step(),
            codec_hash: trainer.codec_hash().to_string(),
            gradient_coverage: trainer.gradient_coverage(),
            untouched_parameters: trainer.untouched_parameters(),
            last: trainer.trace.last().copied(),
        },
        config: cfg.clone(),
    };
    atomic_write(&cfg.out_dir.join(SUMMARY), &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
