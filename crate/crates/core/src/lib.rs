// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod error;
pub mod exec;
pub mod generator;
pub mod gradcam;
pub mod imaging;
pub mod inject;
pub mod loss;
pub mod nn;
pub mod pipeline;
pub mod subjective;

pub use error::{Error, Result};
pub use exec::Execution;
