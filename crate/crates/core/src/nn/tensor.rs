use crate::imaging::Planes;

/// Single-sample `channels × height × width` activation buffer in f32.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor buffer size");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.channels, self.height, self.width)
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.spatial();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.spatial();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f32) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates along the channel axis.
    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let (h, w) = (parts[0].height, parts[0].width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            assert_eq!((p.height, p.width), (h, w), "concat spatial mismatch");
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Tensor::from_vec(channels, h, w, data)
    }

    /// Replicates the last row/column until the size is a multiple of `m`.
    pub fn pad_to_multiple(&self, m: usize) -> Tensor {
        let ph = self.height.div_ceil(m) * m;
        let pw = self.width.div_ceil(m) * m;
        if (ph, pw) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Tensor::zeros(self.channels, ph, pw);
        for c in 0..self.channels {
            for y in 0..ph {
                let sy = y.min(self.height - 1);
                for x in 0..pw {
                    let sx = x.min(self.width - 1);
                    out.data[(c * ph + y) * pw + x] = self.data[(c * self.height + sy) * self.width + sx];
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::pad_to_multiple`]: folds padded gradients back onto the edge.
    pub fn unpad_adjoint(&self, height: usize, width: usize) -> Tensor {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height {
                let sy = y.min(height - 1);
                for x in 0..self.width {
                    let sx = x.min(width - 1);
                    out.data[(c * height + sy) * width + sx] += self.data[(c * self.height + y) * self.width + x];
                }
            }
        }
        out
    }

    /// Top-left window of the given size.
    pub fn crop(&self, height: usize, width: usize) -> Tensor {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..height {
                let src = (c * self.height + y) * self.width;
                let dst = (c * height + y) * width;
                out.data[dst..dst + width].copy_from_slice(&self.data[src..src + width]);
            }
        }
        out
    }

    /// Adjoint of [`Self::crop`]: zero-extends to the larger size.
    pub fn uncrop(&self, height: usize, width: usize) -> Tensor {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = (c * self.height + y) * self.width;
                let dst = (c * height + y) * width;
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        out
    }

    pub fn to_planes(&self) -> Planes {
        Planes::from_vec(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("finite tensor")
    }
}

impl From<&Planes> for Tensor {
    fn from(p: &Planes) -> Self {
        let (c, h, w) = p.shape();
        Tensor::from_vec(c, h, w, p.data().iter().map(|&v| v as f32).collect())
    }
}
