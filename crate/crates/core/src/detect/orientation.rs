use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::Keypoint;
use crate::imgproc::{GaussianPyramid, GrayImage, PyramidParams};

/// `Full` bins gradient directions over `[0, 2pi)`. `Half` folds opposite
/// directions together and bins over `[0, pi)`, which makes the result
/// invariant to intensity inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationMode {
    Full,
    Half,
}

impl OrientationMode {
    fn period(self) -> f64 {
        match self {
            OrientationMode::Full => TAU,
            OrientationMode::Half => PI,
        }
    }
}

const BINS: usize = 36;
const WINDOW_FACTOR: f64 = 1.5;
const PEAK_RATIO: f64 = 0.8;
const MARGIN_SIGMAS: f64 = 3.0;

/// Full-mode orientations of `k` in `img`.
pub fn assign_orientations(img: &GrayImage, k: &Keypoint) -> Vec<(Keypoint, f64)> {
    assign_orientations_mode(img, k, OrientationMode::Full)
}

pub fn assign_orientations_mode(img: &GrayImage, k: &Keypoint, mode: OrientationMode) -> Vec<(Keypoint, f64)> {
    if img.width() < 3 || img.height() < 3 {
        return Vec::new();
    }
    let params = PyramidParams { min_size: 3, ..PyramidParams::default() };
    let pyr = GaussianPyramid::build(img, params);
    orientations_in_pyramid(&pyr, k, mode).into_iter().map(|o| (*k, o)).collect()
}

/// Dominant orientations from a 36-bin histogram of gradient directions,
/// weighted by magnitude and a Gaussian window of `1.5 sigma`, on the level
/// nearest the keypoint scale. Every local peak of at least 0.8 times the
/// maximum yields one orientation, strongest first. Keypoints closer than
/// `3 sigma` to the image border get none.
pub fn orientations_in_pyramid(pyr: &GaussianPyramid, k: &Keypoint, mode: OrientationMode) -> Vec<f64> {
    let Some(base) = pyr.octaves.first().map(|o| &o.levels[0].image) else {
        return Vec::new();
    };
    let margin = MARGIN_SIGMAS * k.sigma;
    let (w0, h0) = ((base.width() - 1) as f64, (base.height() - 1) as f64);
    if k.x < margin || k.y < margin || k.x > w0 - margin || k.y > h0 - margin {
        return Vec::new();
    }

    let (o, l) = pyr.level_for_sigma(k.sigma);
    let octave = &pyr.octaves[o];
    let img = &octave.levels[l].image;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let cx = k.x / octave.step;
    let cy = k.y / octave.step;
    let sigma_w = WINDOW_FACTOR * k.sigma / octave.step;
    let radius = (3.0 * sigma_w).round().max(1.0) as i64;
    let denom = 2.0 * sigma_w * sigma_w;
    let period = mode.period();

    let mut hist = [0.0f64; BINS];
    let (ix, iy) = (cx.round() as i64, cy.round() as i64);
    for py in (iy - radius).max(1)..=(iy + radius).min(h - 2) {
        for px in (ix - radius).max(1)..=(ix + radius).min(w - 2) {
            let (dx, dy) = (px as f64 - cx, py as f64 - cy);
            let r2 = dx * dx + dy * dy;
            if r2 > (radius * radius) as f64 {
                continue;
            }
            let (xu, yu) = (px as usize, py as usize);
            let gx = 0.5 * (img.get(xu + 1, yu) - img.get(xu - 1, yu));
            let gy = 0.5 * (img.get(xu, yu + 1) - img.get(xu, yu - 1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(period);
            let weight = mag * (-r2 / denom).exp();
            let f = theta / period * BINS as f64;
            let b0 = f.floor();
            let frac = f - b0;
            let b0 = b0 as usize % BINS;
            hist[b0] += weight * (1.0 - frac);
            hist[(b0 + 1) % BINS] += weight * frac;
        }
    }
    peaks(&smooth(&hist), period)
}

/// Circular `[1 4 6 4 1] / 16` smoothing.
fn smooth(h: &[f64; BINS]) -> [f64; BINS] {
    let mut out = [0.0; BINS];
    for (i, v) in out.iter_mut().enumerate() {
        let at = |d: i64| h[(i as i64 + d).rem_euclid(BINS as i64) as usize];
        *v = (at(-2) + 4.0 * at(-1) + 6.0 * at(0) + 4.0 * at(1) + at(2)) / 16.0;
    }
    out
}

fn peaks(h: &[f64; BINS], period: f64) -> Vec<f64> {
    let max = h.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut found: Vec<(f64, f64)> = Vec::new();
    for i in 0..BINS {
        let c = h[i];
        let l = h[(i + BINS - 1) % BINS];
        let r = h[(i + 1) % BINS];
        if c > l && c > r && c >= PEAK_RATIO * max {
            let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
            let angle = ((i as f64 + offset) * period / BINS as f64).rem_euclid(period);
            let angle = if angle >= period { 0.0 } else { angle };
            found.push((c, angle));
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    found.into_iter().map(|(_, a)| a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::DetectorKind;

    fn kp(x: f64, y: f64, sigma: f64) -> Keypoint {
        Keypoint { x, y, sigma, response: 1.0, detector: DetectorKind::Dog, octave: 0, level: 1.0 }
    }

    fn angle_diff(a: f64, b: f64, period: f64) -> f64 {
        let d = (a - b).rem_euclid(period);
        d.min(period - d)
    }

    #[test]
    fn ramp_has_single_orientation() {
        let img = GrayImage::from_fn(64, 64, |x, _| x as f64 / 64.0);
        let out = assign_orientations(&img, &kp(32.0, 32.0, 2.0));
        assert_eq!(out.len(), 1);
        assert!(angle_diff(out[0].1, 0.0, TAU) < 0.05);

        let rotated = GrayImage::from_fn(64, 64, |_, y| y as f64 / 64.0);
        let out = assign_orientations(&rotated, &kp(32.0, 32.0, 2.0));
        assert_eq!(out.len(), 1);
        assert!(angle_diff(out[0].1, PI / 2.0, TAU) < 0.05);
    }

    #[test]
    fn corner_of_two_edges_has_two_orientations() {
        // a vertical and a horizontal step of equal contrast, each 5 px from
        // the keypoint, crossing away from the window center
        let img = GrayImage::from_fn(64, 64, |x, y| 0.2 + 0.3 * (x >= 27) as u8 as f64 + 0.3 * (y >= 37) as u8 as f64);
        let out = assign_orientations(&img, &kp(31.5, 31.5, 2.0));
        assert_eq!(out.len(), 2, "{out:?}");
        let mut angles: Vec<f64> = out.iter().map(|o| o.1).collect();
        angles.sort_by(f64::total_cmp);
        // the crossing pulls both peaks slightly towards the diagonal
        assert!(angle_diff(angles[0], 0.0, TAU) < 0.1, "{angles:?}");
        assert!(angle_diff(angles[1], PI / 2.0, TAU) < 0.1, "{angles:?}");
    }

    #[test]
    fn border_keypoints_are_dropped() {
        let img = GrayImage::from_fn(64, 64, |x, _| x as f64 / 64.0);
        assert!(assign_orientations(&img, &kp(5.0, 32.0, 2.0)).is_empty());
        assert!(assign_orientations(&img, &kp(32.0, 60.0, 2.0)).is_empty());
    }

    #[test]
    fn half_mode_is_inversion_invariant() {
        let img = crate::synthetic::textured_scene(96, 96, 11);
        let inv = img.map(|v| 1.0 - v);
        let k = kp(48.0, 47.0, 3.0);
        let a = assign_orientations_mode(&img, &k, OrientationMode::Half);
        let b = assign_orientations_mode(&inv, &k, OrientationMode::Half);
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!(angle_diff(p.1, q.1, PI) < 1e-9);
            assert!(p.1 < PI);
        }
        let full = assign_orientations(&img, &k);
        let full_inv = assign_orientations(&inv, &k);
        assert!(angle_diff(full[0].1 + PI, full_inv[0].1, TAU) < 1e-9);
    }
}
