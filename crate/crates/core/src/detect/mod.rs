//! Scale-covariant DoG and Hessian detectors with adaptive thresholding and
//! dominant-orientation assignment.
//!
//! Candidates are collected once at the threshold floor and the adaptive
//! rule is replayed over them, so the result equals repeated detection with
//! a decaying threshold.

mod extrema;
mod orientation;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Laf, Point2};
use crate::imgproc::{GaussianPyramid, GrayImage, PyramidParams};

pub use orientation::{assign_orientations, assign_orientations_mode, orientations_in_pyramid, OrientationMode};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("image {width}x{height} is smaller than 32x32")]
    TooSmall { width: usize, height: usize },
    #[error("invalid detector config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[serde(alias = "DoG")]
    Dog,
    #[serde(alias = "Hessian")]
    Hessian,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Dog => "dog",
            DetectorKind::Hessian => "hessian",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dog" => Ok(DetectorKind::Dog),
            "hessian" => Ok(DetectorKind::Hessian),
            other => Err(format!("unknown detector '{other}'")),
        }
    }
}

/// A scale-space extremum. Position and `sigma` are in input-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    /// Refined response; signed for DoG, positive for Hessian.
    pub response: f64,
    pub detector: DetectorKind,
    pub octave: usize,
    /// Fractional level within the octave.
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub initial_threshold: f64,
    pub min_features: usize,
    pub threshold_floor: f64,
    pub decay_factor: f64,
    /// Principal-curvature ratio limit (DoG only).
    pub edge_ratio: f64,
    /// Strongest responses kept after the adaptive rule.
    pub max_features: Option<usize>,
    /// Extrema closer than this to the octave border are skipped.
    pub border: usize,
    pub pyramid: PyramidParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::dog()
    }
}

impl DetectorConfig {
    pub fn dog() -> Self {
        Self {
            initial_threshold: 0.04 / 3.0,
            min_features: 1500,
            threshold_floor: 1e-5,
            decay_factor: 0.5,
            edge_ratio: 10.0,
            max_features: None,
            border: 5,
            pyramid: PyramidParams::default(),
        }
    }

    /// Hessian responses scale with squared contrast, hence the lower values.
    pub fn hessian() -> Self {
        Self { initial_threshold: 2e-4, threshold_floor: 1e-9, ..Self::dog() }
    }

    pub fn for_kind(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Dog => Self::dog(),
            DetectorKind::Hessian => Self::hessian(),
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.threshold_floor > 0.0 && self.threshold_floor <= self.initial_threshold) {
            return Err(DetectError::Config("need 0 < thresholdFloor <= initialThreshold"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(DetectError::Config("decayFactor must lie in (0, 1)"));
        }
        if self.min_features == 0 {
            return Err(DetectError::Config("minFeatures must be at least 1"));
        }
        if self.edge_ratio <= 1.0 {
            return Err(DetectError::Config("edgeRatio must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    /// Sorted by `|response|` descending.
    pub keypoints: Vec<Keypoint>,
    /// Threshold at which the adaptive rule stopped.
    pub threshold: f64,
}

pub const MIN_IMAGE_SIZE: usize = 32;

pub fn build_pyramid(img: &GrayImage, cfg: &DetectorConfig) -> Result<GaussianPyramid, DetectError> {
    if img.width() < MIN_IMAGE_SIZE || img.height() < MIN_IMAGE_SIZE {
        return Err(DetectError::TooSmall { width: img.width(), height: img.height() });
    }
    Ok(GaussianPyramid::build(img, cfg.pyramid))
}

/// Adaptive detection; see [`detect_in_pyramid`].
pub fn detect(img: &GrayImage, cfg: &DetectorConfig, kind: DetectorKind) -> Result<Vec<Keypoint>, DetectError> {
    cfg.validate()?;
    let pyr = build_pyramid(img, cfg)?;
    Ok(detect_in_pyramid(&pyr, cfg, kind).keypoints)
}

/// Detection at one fixed threshold, without the adaptive rule or the cap.
pub fn detect_fixed(img: &GrayImage, cfg: &DetectorConfig, kind: DetectorKind, threshold: f64) -> Result<Vec<Keypoint>, DetectError> {
    let pyr = build_pyramid(img, cfg)?;
    let candidates = extrema::candidates(&pyr, cfg, kind, threshold);
    let mut kps: Vec<Keypoint> = candidates.into_iter().filter(|c| c.passes(threshold)).map(|c| c.keypoint).collect();
    sort_by_strength(&mut kps);
    Ok(kps)
}

/// Starting at `initial_threshold`, multiplies the threshold by
/// `decay_factor` while fewer than `min_features` keypoints pass and the
/// floor is not reached. Lowering the threshold only ever adds keypoints.
pub fn detect_in_pyramid(pyr: &GaussianPyramid, cfg: &DetectorConfig, kind: DetectorKind) -> Detection {
    let candidates = extrema::candidates(pyr, cfg, kind, cfg.threshold_floor);
    let mut threshold = cfg.initial_threshold;
    loop {
        let count = candidates.iter().filter(|c| c.passes(threshold)).count();
        if count >= cfg.min_features || threshold <= cfg.threshold_floor {
            break;
        }
        threshold = (threshold * cfg.decay_factor).max(cfg.threshold_floor);
    }
    let mut keypoints: Vec<Keypoint> =
        candidates.into_iter().filter(|c| c.passes(threshold)).map(|c| c.keypoint).collect();
    sort_by_strength(&mut keypoints);
    if let Some(cap) = cfg.max_features {
        keypoints.truncate(cap);
    }
    Detection { keypoints, threshold }
}

fn sort_by_strength(kps: &mut [Keypoint]) {
    kps.sort_by(|a, b| {
        b.response
            .abs()
            .total_cmp(&a.response.abs())
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.sigma.total_cmp(&b.sigma))
    });
}

/// Similarity frame: center `(x, y)`, shape `sigma * R(orientation)`.
pub fn keypoint_to_laf(k: &Keypoint, orientation: f64) -> Laf {
    Laf::similarity(Point2::new(k.x, k.y), k.sigma, orientation).expect("keypoint sigma is positive and finite")
}

#[derive(Serialize)]
struct KeypointRow {
    x: f64,
    y: f64,
    sigma: f64,
    orientation: f64,
    response: f64,
    detector: DetectorKind,
}

/// CSV with header `x,y,sigma,orientation,response,detector`.
pub fn write_keypoints_csv<W: Write>(out: W, oriented: &[(Keypoint, f64)]) -> Result<(), DetectError> {
    let mut w = csv::Writer::from_writer(out);
    for (k, o) in oriented {
        w.serialize(KeypointRow { x: k.x, y: k.y, sigma: k.sigma, orientation: *o, response: k.response, detector: k.detector })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_blob, textured_scene};

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = GrayImage::filled(64, 64, 0.4);
        for kind in [DetectorKind::Dog, DetectorKind::Hessian] {
            let cfg = DetectorConfig::for_kind(kind);
            let pyr = build_pyramid(&img, &cfg).unwrap();
            let det = detect_in_pyramid(&pyr, &cfg, kind);
            assert!(det.keypoints.is_empty());
            assert_eq!(det.threshold, cfg.threshold_floor);
        }
    }

    #[test]
    fn small_image_is_rejected() {
        let img = GrayImage::filled(31, 64, 0.4);
        assert!(matches!(detect(&img, &DetectorConfig::dog(), DetectorKind::Dog), Err(DetectError::TooSmall { .. })));
    }

    #[test]
    fn blob_is_localized_in_position_and_scale() {
        let sigma_b = 4.0;
        let img = gaussian_blob(96, 96, 47.3, 45.6, sigma_b, 0.6, 0.2);
        for kind in [DetectorKind::Dog, DetectorKind::Hessian] {
            let kps = detect(&img, &DetectorConfig::for_kind(kind), kind).unwrap();
            let top = kps[0];
            let d = ((top.x - 47.3).powi(2) + (top.y - 45.6).powi(2)).sqrt();
            assert!(d < 1.0, "{kind}: offset {d}");
            assert!((top.sigma / sigma_b - 1.0).abs() < 0.25, "{kind}: sigma {}", top.sigma);
        }
    }

    #[test]
    fn output_is_sorted_and_deterministic() {
        let img = textured_scene(160, 120, 3);
        let cfg = DetectorConfig::dog();
        let a = detect(&img, &cfg, DetectorKind::Dog).unwrap();
        let b = detect(&img, &cfg, DetectorKind::Dog).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].response.abs() >= w[1].response.abs()));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectorConfig::dog();
        cfg.threshold_floor = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = DetectorConfig::dog();
        cfg.decay_factor = 1.0;
        assert!(cfg.validate().is_err());
        assert!(DetectorConfig::hessian().validate().is_ok());
    }

    #[test]
    fn laf_from_keypoint() {
        let k = Keypoint { x: 3.0, y: 4.0, sigma: 2.0, response: 1.0, detector: DetectorKind::Dog, octave: 0, level: 1.0 };
        let l = keypoint_to_laf(&k, std::f64::consts::FRAC_PI_2);
        assert!((l.shape - crate::geometry::rotation2(std::f64::consts::FRAC_PI_2) * 2.0).norm() < 1e-12);
        assert!((l.shape.determinant() - 4.0).abs() < 1e-12);
        let l0 = keypoint_to_laf(&Keypoint { sigma: 1.0, ..k }, 0.0);
        assert_eq!(l0.shape, nalgebra::Matrix2::identity());
    }

    #[test]
    fn csv_dump_has_header() {
        let k = Keypoint { x: 1.5, y: 2.0, sigma: 1.6, response: -0.02, detector: DetectorKind::Hessian, octave: 0, level: 1.0 };
        let mut buf = Vec::new();
        write_keypoints_csv(&mut buf, &[(k, 0.25)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,y,sigma,orientation,response,detector");
        assert_eq!(text.lines().nth(1).unwrap(), "1.5,2.0,1.6,0.25,-0.02,hessian");
    }
}
