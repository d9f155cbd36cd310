//! Shared image data model, lossless I/O, fidelity metrics and Sobel gradients.

mod gradient;
mod io;
mod metrics;
mod planes;

pub use gradient::{spatial_gradient, spatial_gradient_with, GradientField, GradientMode};
pub use io::{load_gray_map, load_image, load_image_as_rgb, minmax_visualization, save_image};
pub use metrics::{mse, mse_from_psnr, psnr, psnr_from_mse};
pub use planes::{ImageTensor, Planes, MIN_SIDE};
