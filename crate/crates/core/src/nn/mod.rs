//! Minimal f32 neural-network toolkit with explicit backward passes.

pub mod act;
pub mod adam;
pub mod conv;
pub mod gdn;
pub mod module;
pub mod ops;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvTranspose2d};
pub use gdn::Gdn;
pub use module::Module;
pub use ops::Padding;
pub use tensor::Tensor;
