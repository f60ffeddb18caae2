//! Grayscale images, Gaussian scale space, gradients, affine warping and
//! patch sampling.
//!
//! Pixel `(x, y)` has its center at coordinates `(x, y)`; images are stored
//! row-major with intensities nominally in `[0, 1]`.

mod filter;
pub mod io;
mod patch;
mod pyramid;
mod warp;

pub use filter::{gaussian_blur, gaussian_blur_xy, gaussian_kernel};
pub use patch::{photometric_normalize, sample_patch, Patch, DEFAULT_MR_SCALE, PATCH_SIZE};
pub use pyramid::{GaussianPyramid, Octave, PyramidLevel, PyramidParams};
pub use warp::{fit_to_bbox, warp_affine, warp_bilinear};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("empty image")]
    Empty,
    #[error("buffer length {len} does not match {width}x{height}")]
    SizeMismatch { width: usize, height: usize, len: usize },
    #[error("non-finite pixel value")]
    NonFinite,
    #[error("singular transform")]
    Singular,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("image io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::SizeMismatch { width, height, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite);
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Bilinear sample; coordinates outside the image clamp to the edge.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        self.bilinear_inside(x, y)
    }

    /// Bilinear sample; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        if !(x >= -1e-9 && y >= -1e-9 && x <= xmax + 1e-9 && y <= ymax + 1e-9) {
            return None;
        }
        Some(self.bilinear_inside(x.clamp(0.0, xmax), y.clamp(0.0, ymax)))
    }

    #[inline]
    fn bilinear_inside(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let r0 = y0 * self.width;
        let r1 = y1 * self.width;
        let top = self.data[r0 + x0] * (1.0 - fx) + self.data[r0 + x1] * fx;
        if fy == 0.0 {
            return top;
        }
        let bottom = self.data[r1 + x0] * (1.0 - fx) + self.data[r1 + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Every second pixel in each direction; dimensions halve with floor
    /// division.
    pub fn downsample2(&self) -> Self {
        let w = self.width / 2;
        let h = self.height / 2;
        Self::from_fn(w, h, |x, y| self.get(2 * x, 2 * y))
    }
}

/// Three-channel image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

/// Channel averaging: `(R + G + B) / 3`.
pub fn to_gray(rgb: &ColorImage) -> Result<GrayImage, ImageError> {
    if rgb.width == 0 || rgb.height == 0 || rgb.data.is_empty() {
        return Err(ImageError::Empty);
    }
    if rgb.data.len() != rgb.width * rgb.height {
        return Err(ImageError::SizeMismatch { width: rgb.width, height: rgb.height, len: rgb.data.len() });
    }
    let data = rgb.data.iter().map(|[r, g, b]| (r + g + b) / 3.0).collect();
    GrayImage::new(rgb.width, rgb.height, data)
}

/// Gradient magnitude and orientation in `[0, 2pi)`. Central differences in
/// the interior, one-sided differences on the border.
pub fn gradients(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = (img.width(), img.height());
    let mut mag = vec![0.0; w * h];
    let mut ori = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = derivative_at(img, x, y);
            mag[y * w + x] = dx.hypot(dy);
            ori[y * w + x] = wrap_angle(dy.atan2(dx));
        }
    }
    (GrayImage { width: w, height: h, data: mag }, GrayImage { width: w, height: h, data: ori })
}

#[inline]
pub(crate) fn derivative_at(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (img.width(), img.height());
    let dx = if w < 2 {
        0.0
    } else if x == 0 {
        img.get(1, y) - img.get(0, y)
    } else if x == w - 1 {
        img.get(w - 1, y) - img.get(w - 2, y)
    } else {
        0.5 * (img.get(x + 1, y) - img.get(x - 1, y))
    };
    let dy = if h < 2 {
        0.0
    } else if y == 0 {
        img.get(x, 1) - img.get(x, 0)
    } else if y == h - 1 {
        img.get(x, h - 1) - img.get(x, h - 2)
    } else {
        0.5 * (img.get(x, y + 1) - img.get(x, y - 1))
    };
    (dx, dy)
}

/// Maps an angle into `[0, 2pi)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = a.rem_euclid(two_pi);
    if r >= two_pi {
        0.0
    } else {
        r
    }
}
