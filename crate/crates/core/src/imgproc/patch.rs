use super::GrayImage;
use crate::geometry::Laf;

/// Side of a normalized patch.
pub const PATCH_SIZE: usize = 41;

/// Magnification from the LAF frame to the measurement region, `3 * sqrt(3)`.
pub const DEFAULT_MR_SCALE: f64 = 5.196_152_422_706_632;

/// A 41x41 row-major patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    data: Vec<f64>,
}

impl Patch {
    pub fn new(data: Vec<f64>) -> Option<Self> {
        (data.len() == PATCH_SIZE * PATCH_SIZE && data.iter().all(|v| v.is_finite()))
            .then_some(Self { data })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                data.push(f(x, y));
            }
        }
        Self { data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * PATCH_SIZE + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(PATCH_SIZE, PATCH_SIZE, self.data.clone()).expect("patch is square")
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Samples the measurement region of `laf`: patch coordinate `p` in
/// `[-1, 1]^2` maps to `center + mr_scale * A * p`. Bilinear with
/// clamp-to-edge.
pub fn sample_patch(img: &GrayImage, laf: &Laf, mr_scale: f64) -> Patch {
    let half = (PATCH_SIZE - 1) as f64 / 2.0;
    let a = laf.shape * (mr_scale / half);
    let (cx, cy) = (laf.center.x, laf.center.y);
    Patch::from_fn(|x, y| {
        let px = x as f64 - half;
        let py = y as f64 - half;
        let ix = cx + a[(0, 0)] * px + a[(0, 1)] * py;
        let iy = cy + a[(1, 0)] * px + a[(1, 1)] * py;
        img.sample_clamped(ix, iy)
    })
}

const TARGET_MEAN: f64 = 0.5;
const TARGET_STD: f64 = 0.2;

/// Shifts and scales to mean 0.5, standard deviation 0.2, then clamps to
/// `[0, 1]`. A flat patch becomes constant 0.5.
pub fn photometric_normalize(p: &Patch) -> Patch {
    let (mean, std) = p.mean_std();
    if std < 1e-12 {
        return p.map(|_| TARGET_MEAN);
    }
    p.map(|v| (TARGET_MEAN + (v - mean) * (TARGET_STD / std)).clamp(0.0, 1.0))
}
