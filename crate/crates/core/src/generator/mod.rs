//! JND map generator: a strided conv autoencoder over the image and its
//! codec-derived priors, trained against the frozen codec.

mod model;
pub mod train;

pub use model::{distort, generate, generator_input, normalize_guided, GeneratorArch, GeneratorModel, GeneratorTrace, JndMap, INPUT_CHANNELS};
pub use train::{train_jnd, Ablation, ExternalPrior, JndTraceRow, JndTrainConfig, JndTrainer};
