use serde::{Deserialize, Serialize};

use super::{gaussian_blur, sample_patch, GrayImage, Patch, PATCH_SIZE};
use crate::geometry::{Laf, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidParams {
    pub scales_per_octave: usize,
    pub initial_sigma: f64,
    /// Blur already present in the input.
    pub assumed_blur: f64,
    /// Octaves are added while the smaller dimension is at least this.
    pub min_size: usize,
    /// Upper bound on octaves; `None` means as many as `min_size` allows.
    pub max_octaves: Option<usize>,
}

impl Default for PyramidParams {
    fn default() -> Self {
        Self {
            scales_per_octave: 3,
            initial_sigma: 1.6,
            assumed_blur: 0.5,
            min_size: 32,
            max_octaves: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub image: GrayImage,
    /// Blur in original-image pixels.
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct Octave {
    pub levels: Vec<PyramidLevel>,
    /// Size of one octave pixel in original pixels (`2^o`).
    pub step: f64,
}

impl Octave {
    /// Blur of level `i` in octave pixels.
    pub fn level_sigma(&self, i: usize) -> f64 {
        self.levels[i].sigma / self.step
    }
}

/// Gaussian scale space with `scales_per_octave + 3` levels per octave.
#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    pub octaves: Vec<Octave>,
    pub params: PyramidParams,
}

impl GaussianPyramid {
    pub fn build(img: &GrayImage, params: PyramidParams) -> Self {
        let s = params.scales_per_octave.max(1);
        let n_levels = s + 3;
        let k = 2f64.powf(1.0 / s as f64);
        let sigma0 = params.initial_sigma;
        let base_blur = (sigma0 * sigma0 - params.assumed_blur * params.assumed_blur).max(0.0).sqrt();
        let mut base = if base_blur > 0.0 { gaussian_blur(img, base_blur) } else { img.clone() };

        let mut octaves = Vec::new();
        let mut step = 1.0;
        let max_octaves = params.max_octaves.unwrap_or(usize::MAX);
        while base.width().min(base.height()) >= params.min_size && octaves.len() < max_octaves {
            let mut levels = Vec::with_capacity(n_levels);
            levels.push(PyramidLevel { image: base.clone(), sigma: sigma0 * step });
            for i in 1..n_levels {
                let prev = sigma0 * k.powi(i as i32 - 1);
                let cur = sigma0 * k.powi(i as i32);
                let inc = (cur * cur - prev * prev).sqrt();
                let image = gaussian_blur(&levels[i - 1].image, inc);
                levels.push(PyramidLevel { image, sigma: cur * step });
            }
            base = levels[s].image.downsample2();
            octaves.push(Octave { levels, step });
            step *= 2.0;
        }
        Self { octaves, params }
    }

    /// Octave and level whose blur is closest (in log scale) to `sigma`
    /// original pixels, clamped to the available range.
    pub fn level_for_sigma(&self, sigma: f64) -> (usize, usize) {
        let s = self.params.scales_per_octave.max(1) as f64;
        let idx = (s * (sigma / self.params.initial_sigma).log2()).round().max(0.0) as usize;
        let s = s as usize;
        let o = (idx / s).min(self.octaves.len().saturating_sub(1));
        let l = if idx / s > o { s } else { idx % s };
        (o, l)
    }

    /// Samples the measurement region of `laf` from the level whose blur is
    /// about one patch pixel, so the patch is neither aliased nor
    /// needlessly blurred.
    pub fn sample_patch(&self, laf: &Laf, mr_scale: f64) -> Patch {
        let half = (PATCH_SIZE - 1) as f64 / 2.0;
        let step = mr_scale * laf.scale() / half;
        let (o, l) = self.level_for_sigma(step);
        let octave = &self.octaves[o];
        let local = Laf {
            center: Point2::new(laf.center.x / octave.step, laf.center.y / octave.step),
            shape: laf.shape / octave.step,
        };
        sample_patch(&octave.levels[l].image, &local, mr_scale)
    }
}
