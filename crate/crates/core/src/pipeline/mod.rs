//! Dataset ingestion, crops, checkpoints, configuration and orchestration.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod synthetic;

pub use checkpoint::{atomic_write, Checkpoint, ModelKind};
pub use config::ExperimentConfig;
pub use dataset::{derive_seed, ingest, sample_crop_specs, sample_crops, CropSpec, ImageCollection, NamedImage};
pub use experiment::{
    load_external_priors, run_codec_stage, run_experiment, run_jnd_stage, write_trace, ExperimentSummary, StageOutput,
};
