//! Learned lossy codec standing in for the visual system's signal degradation.
//!
//! Layers follow the three-stage strided analysis (3→128→128→128, each ÷2,
//! GDN after the first two) and the mirrored synthesis with inverse GDN.

pub mod entropy;
mod model;
pub mod train;

pub use entropy::{FactorizedDensity, LatentDensity, RateEstimate};
pub use model::{
    quantize, AnalysisTrace, CodecArch, CodecModel, DegradeTrace, LatentTensor, QuantMode, SynthesisTrace,
    TrainingState, DOWNSAMPLE,
};
pub use train::{train_codec, CodecTraceRow, CodecTrainConfig, CodecTrainer};
