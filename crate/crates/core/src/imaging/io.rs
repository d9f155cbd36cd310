use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::planes::{ImageTensor, Planes};
use crate::error::{Error, Result};

fn load_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn lossless_format(path: &Path) -> Result<ImageFormat> {
    match ImageFormat::from_path(path) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Bmp)) => Ok(f),
        Ok(f) => Err(load_error(path, format!("unsupported format {f:?}; PNG or BMP required"))),
        Err(e) => Err(load_error(path, e.to_string())),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let format = lossless_format(path)?;
    let bytes = std::fs::read(path).map_err(|e| load_error(path, e.to_string()))?;
    image::load_from_memory_with_format(&bytes, format).map_err(|e| load_error(path, e.to_string()))
}

fn from_rgb(img: &RgbImage) -> ImageTensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let planes = Planes::from_fn(3, h, w, |c, y, x| raw[(y * w + x) * 3 + c] as f64 / 255.0);
    ImageTensor::clipped(planes)
}

fn from_gray(img: &GrayImage, channels: usize) -> ImageTensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let planes = Planes::from_fn(channels, h, w, |_, y, x| raw[y * w + x] as f64 / 255.0);
    ImageTensor::clipped(planes)
}

/// Loads an 8-bit RGB PNG or BMP as a `[0, 1]` tensor (`value / 255`).
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    match decode(path)? {
        DynamicImage::ImageRgb8(img) => Ok(from_rgb(&img)),
        other => Err(load_error(
            path,
            format!("expected 8-bit RGB, found {:?}", other.color()),
        )),
    }
}

/// Like [`load_image`] but also accepts 8-bit grayscale, replicated to three channels.
pub fn load_image_as_rgb(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    match decode(path)? {
        DynamicImage::ImageRgb8(img) => Ok(from_rgb(&img)),
        DynamicImage::ImageLuma8(img) => Ok(from_gray(&img, 3)),
        other => Err(load_error(
            path,
            format!("expected 8-bit RGB or grayscale, found {:?}", other.color()),
        )),
    }
}

/// Loads a single-channel map; RGB sources are reduced to luminance.
pub fn load_gray_map(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    match decode(path)? {
        DynamicImage::ImageLuma8(img) => Ok(from_gray(&img, 1)),
        DynamicImage::ImageRgb8(img) => Ok(ImageTensor::clipped(from_rgb(&img).luminance())),
        other => Err(load_error(
            path,
            format!("expected 8-bit grayscale or RGB, found {:?}", other.color()),
        )),
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `round(value * 255)`; one channel becomes grayscale, three become RGB.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = lossless_format(path).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (c, h, w) = img.shape();
    let p = img.planes();
    let dynimg = match c {
        1 => {
            let buf: Vec<u8> = p.data().iter().map(|&v| quantize(v)).collect();
            DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, buf).expect("buffer size"))
        }
        3 => {
            let mut buf = Vec::with_capacity(h * w * 3);
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..3 {
                        buf.push(quantize(p.get(ch, y, x)));
                    }
                }
            }
            DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer size"))
        }
        other => {
            return Err(Error::Write {
                path: path.to_path_buf(),
                reason: format!("cannot encode {other} channels"),
            })
        }
    };
    dynimg.save_with_format(path, format).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Rescales arbitrary reals to `[0, 1]` by per-image min–max, for visualization.
pub fn minmax_visualization(p: &Planes) -> ImageTensor {
    let (lo, hi) = p
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return ImageTensor::clipped(Planes::zeros(p.channels(), p.height(), p.width()));
    }
    ImageTensor::clipped(p.map(|v| (v - lo) / span))
}
