use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar (channel-major) real-valued array of shape `channels × height × width`.
///
/// No range constraint; [`ImageTensor`] adds the `[0, 1]` invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Planes {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Planes {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for shape {channels}x{height}x{width}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value {bad}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Planes) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Planes, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Planes {
        Planes {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sum_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Window `[top, top+height) × [left, left+width)` of every channel.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Planes> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Planes::from_fn(self.channels, height, width, |c, y, x| {
            self.get(c, top + y, left + x)
        }))
    }

    /// Pads bottom/right by edge replication up to the given size.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Planes {
        Planes::from_fn(self.channels, height, width, |c, y, x| {
            self.get(c, y.min(self.height - 1), x.min(self.width - 1))
        })
    }
}

impl AsRef<Planes> for Planes {
    fn as_ref(&self) -> &Planes {
        self
    }
}

/// Image with every value finite and within `[0, 1]`.
///
/// 8-bit sources map to `value / 255`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Planes", into = "Planes")]
pub struct ImageTensor(Planes);

/// Smallest side accepted by the codec (three 2× downsamplings plus CAM).
pub const MIN_SIDE: usize = 16;

impl ImageTensor {
    pub fn new(planes: Planes) -> Result<Self> {
        if let Some(bad) = planes.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self(planes))
    }

    /// Clips every value into `[0, 1]`.
    pub fn clipped(mut planes: Planes) -> Self {
        for v in &mut planes.data {
            *v = v.clamp(0.0, 1.0);
        }
        Self(planes)
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Planes::from_vec(channels, height, width, data)?)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Planes::filled(channels, height, width, value))
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        Self::clipped(Planes::from_fn(channels, height, width, f))
    }

    pub fn planes(&self) -> &Planes {
        &self.0
    }

    pub fn into_planes(self) -> Planes {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.channels
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.0.get(c, y, x)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        Ok(Self(self.0.crop(top, left, height, width)?))
    }

    /// Rec.601 luminance plane.
    pub fn luminance(&self) -> Planes {
        if self.channels() == 1 {
            return self.0.clone();
        }
        let (r, g, b) = (self.0.plane(0), self.0.plane(1), self.0.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect();
        Planes {
            channels: 1,
            height: self.height(),
            width: self.width(),
            data,
        }
    }

    pub fn ensure_min_side(&self) -> Result<()> {
        if self.height() < MIN_SIDE || self.width() < MIN_SIDE {
            return Err(Error::Shape(format!(
                "image {}x{} smaller than the {MIN_SIDE}x{MIN_SIDE} minimum",
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }
}

impl AsRef<Planes> for ImageTensor {
    fn as_ref(&self) -> &Planes {
        &self.0
    }
}

impl TryFrom<Planes> for ImageTensor {
    type Error = Error;

    fn try_from(p: Planes) -> Result<Self> {
        ImageTensor::new(p)
    }
}

impl From<ImageTensor> for Planes {
    fn from(img: ImageTensor) -> Planes {
        img.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ImageTensor::from_vec(1, 1, 2, vec![0.0, 1.5]).is_err());
        assert!(ImageTensor::from_vec(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(ImageTensor::from_vec(1, 1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn clip_and_pad() {
        let img = ImageTensor::clipped(Planes::from_vec(1, 1, 3, vec![-0.5, 0.5, 2.0]).unwrap());
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
        let padded = img.planes().pad_replicate(2, 4);
        assert_eq!(padded.data(), &[0.0, 0.5, 1.0, 1.0, 0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn luminance_weights() {
        let img = ImageTensor::from_vec(3, 1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((img.luminance().data()[0] - 0.299).abs() < 1e-12);
        let white = ImageTensor::filled(3, 2, 2, 1.0).unwrap();
        assert!(white.luminance().data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
