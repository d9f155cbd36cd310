//! Experiment configuration, loadable from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{CodecArch, CodecTrainConfig, DOWNSAMPLE};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::generator::{Ablation, GeneratorArch, JndTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory of PNG/BMP training images.
    pub dataset: PathBuf,
    /// Where checkpoints, traces and the summary are written.
    pub out_dir: PathBuf,
    /// Applied to both stages.
    pub execution: Execution,
    /// Steps between checkpoint writes in either stage.
    pub checkpoint_every: usize,
    /// Continue from checkpoints found in `out_dir`.
    pub resume: bool,
    /// Use this trained codec and skip stage 1.
    pub codec_checkpoint: Option<PathBuf>,
    /// Directory with `<stem>.attention.png` and `<stem>.contrast.png`
    /// per training image; required by the `bl-cam` ablation.
    pub external_priors: Option<PathBuf>,
    pub codec: CodecTrainConfig,
    pub codec_arch: CodecArch,
    pub jnd: JndTrainConfig,
    pub generator_arch: GeneratorArch,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            execution: Execution::default(),
            checkpoint_every: 100,
            resume: false,
            codec_checkpoint: None,
            external_priors: None,
            codec: CodecTrainConfig::default(),
            codec_arch: CodecArch::default(),
            jnd: JndTrainConfig::default(),
            generator_arch: GeneratorArch::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.codec.execution = cfg.execution;
        cfg.jnd.execution = cfg.execution;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (stage, crop) in [("codec", self.codec.crop), ("jnd", self.jnd.crop)] {
            if crop % DOWNSAMPLE != 0 {
                return Err(Error::Config(format!(
                    "{stage}.crop {crop} must be divisible by {DOWNSAMPLE}"
                )));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if self.codec_arch.channels == 0 || self.codec_arch.kernel.is_multiple_of(2) || !(self.codec_arch.latent_scale > 0.0) {
            return Err(Error::Config("codec_arch needs channels > 0, an odd kernel and latent_scale > 0".into()));
        }
        let g = &self.generator_arch;
        if g.widths.is_empty() || g.widths.contains(&0) || g.kernel.is_multiple_of(2) || !(g.amplitude > 0.0 && g.amplitude <= 1.0) {
            return Err(Error::Config(
                "generator_arch needs nonzero widths, an odd kernel and amplitude in (0, 1]".into(),
            ));
        }
        if self.jnd.ablation == Ablation::BlCam && self.external_priors.is_none() {
            return Err(Error::Config("bl-cam needs external_priors".into()));
        }
        self.codec.validate()?;
        self.jnd.validate()
    }
}
