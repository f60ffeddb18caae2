//! Affine view synthesis: scaled, rotated and tilted copies of an image,
//! and the mapping of features found in them back to the original frame.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::DetectorKind;
use crate::geometry::{affine_apply, rotation2, transform_laf, Laf, Point2};
use crate::imgproc::{warp_affine, GrayImage};

/// One scale with its tilts. Tilt `t > 1` is sampled at rotations
/// `k * rotation_step / t` in `[0, pi)`; tilt 1 only at rotation 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTier {
    pub scale: f64,
    pub tilts: Vec<f64>,
    pub rotation_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub detectors: Vec<DetectorKind>,
    pub tiers: Vec<SynthTier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSchedule {
    pub iterations: Vec<ScheduleEntry>,
}

impl Default for SynthSchedule {
    fn default() -> Self {
        let step = 2.0 * PI / 5.0;
        let both = vec![DetectorKind::Dog, DetectorKind::Hessian];
        let tier = |scale: f64, tilts: &[f64]| SynthTier { scale, tilts: tilts.to_vec(), rotation_step: step };
        let all_tilts = [1.0, SQRT_2, 2.0, 2.0 * SQRT_2, 4.0];
        Self {
            iterations: vec![
                ScheduleEntry { detectors: both.clone(), tiers: vec![tier(1.0, &[1.0])] },
                ScheduleEntry { detectors: both.clone(), tiers: vec![tier(1.0, &[1.0, SQRT_2, 2.0])] },
                ScheduleEntry { detectors: both, tiers: vec![tier(1.0, &all_tilts), tier(0.25, &all_tilts)] },
            ],
        }
    }
}

impl SynthSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.iterations.is_empty() {
            return Err("schedule needs at least one iteration".into());
        }
        for (i, it) in self.iterations.iter().enumerate() {
            if it.detectors.is_empty() {
                return Err(format!("iteration {} has no detectors", i + 1));
            }
            for tier in &it.tiers {
                if !(tier.scale > 0.0 && tier.scale.is_finite()) {
                    return Err(format!("iteration {}: scale must be positive", i + 1));
                }
                if !(tier.rotation_step > 0.0 && tier.rotation_step.is_finite()) {
                    return Err(format!("iteration {}: rotation step must be positive", i + 1));
                }
                if tier.tilts.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
                    return Err(format!("iteration {}: tilts must be >= 1", i + 1));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub scale: f64,
    pub tilt: f64,
    pub rotation: f64,
}

impl ViewParams {
    pub const IDENTITY: ViewParams = ViewParams { scale: 1.0, tilt: 1.0, rotation: 0.0 };

    /// Identity for deduplication, robust to float noise from config files.
    pub fn key(&self) -> (i64, i64, i64) {
        let q = |v: f64| (v * 1e9).round() as i64;
        (q(self.scale), q(self.tilt), q(self.rotation))
    }

    /// `diag(scale, scale / tilt) * R(rotation)`.
    pub fn linear(&self) -> Matrix2<f64> {
        Matrix2::new(self.scale, 0.0, 0.0, self.scale / self.tilt) * rotation2(self.rotation)
    }
}

/// Number of rotations sampled for `tilt` under `rotation_step`.
pub fn rotation_count(tilt: f64, rotation_step: f64) -> usize {
    if tilt <= 1.0 {
        1
    } else {
        (PI * tilt / rotation_step - 1e-9).ceil().max(1.0) as usize
    }
}

/// All view parameters of one schedule entry, in tier, tilt, rotation order.
pub fn view_params(entry: &ScheduleEntry) -> Vec<ViewParams> {
    let mut out = Vec::new();
    for tier in &entry.tiers {
        for &tilt in &tier.tilts {
            for k in 0..rotation_count(tilt, tier.rotation_step) {
                let rotation = if tilt <= 1.0 { 0.0 } else { k as f64 * tier.rotation_step / tilt };
                out.push(ViewParams { scale: tier.scale, tilt, rotation });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthView {
    pub image: GrayImage,
    /// Original to view coordinates.
    pub a: Matrix3<f64>,
    pub a_inv: Matrix3<f64>,
    pub params: ViewParams,
    pub source_width: usize,
    pub source_height: usize,
}

impl SynthView {
    pub fn identity(img: &GrayImage) -> Self {
        Self {
            image: img.clone(),
            a: Matrix3::identity(),
            a_inv: Matrix3::identity(),
            params: ViewParams::IDENTITY,
            source_width: img.width(),
            source_height: img.height(),
        }
    }

    /// Corners of the source image in view coordinates, in winding order.
    pub fn valid_region(&self) -> [Point2; 4] {
        let (w, h) = ((self.source_width.max(1) - 1) as f64, (self.source_height.max(1) - 1) as f64);
        [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)]
            .map(|p| affine_apply(&self.a, &p))
    }

    /// Signed distance from `p` (view coordinates) to the border of the
    /// warped source image; positive inside.
    pub fn boundary_distance(&self, p: &Point2) -> f64 {
        let poly = self.valid_region();
        let orientation = {
            let (a, b, c) = (poly[0], poly[1], poly[2]);
            (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        };
        let sign = if orientation >= 0.0 { 1.0 } else { -1.0 };
        (0..4)
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % 4]);
                let len = a.distance(&b).max(1e-12);
                sign * ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / len
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Area of the warped source relative to the source.
    pub fn area_ratio(&self) -> f64 {
        (self.a[(0, 0)] * self.a[(1, 1)] - self.a[(0, 1)] * self.a[(1, 0)]).abs()
    }
}

/// Warps `img` by `diag(s, s/t) R(phi)` translated into its bounding box.
pub fn synthesize_view(img: &GrayImage, params: ViewParams) -> SynthView {
    if params.key() == ViewParams::IDENTITY.key() {
        return SynthView::identity(img);
    }
    let (a, w, h) = crate::imgproc::fit_to_bbox(&params.linear(), img.width(), img.height());
    let image = warp_affine(img, &a, w, h).expect("view transforms are invertible affine maps");
    SynthView {
        image,
        a,
        a_inv: a.try_inverse().expect("view transforms are invertible"),
        params,
        source_width: img.width(),
        source_height: img.height(),
    }
}

pub fn synthesize_views(img: &GrayImage, entry: &ScheduleEntry) -> Vec<SynthView> {
    view_params(entry).into_par_iter().map(|p| synthesize_view(img, p)).collect()
}

/// Maps Lafs from view to original coordinates, dropping those whose center
/// lands outside the original image.
pub fn backproject(view: &SynthView, lafs: &[Laf]) -> Vec<Laf> {
    lafs.iter().filter_map(|l| backproject_one(view, l)).collect()
}

pub fn backproject_one(view: &SynthView, laf: &Laf) -> Option<Laf> {
    let mapped = transform_laf(&view.a_inv, laf).ok()?;
    let (w, h) = ((view.source_width.max(1) - 1) as f64, (view.source_height.max(1) - 1) as f64);
    let c = mapped.center;
    (c.x >= 0.0 && c.y >= 0.0 && c.x <= w && c.y <= h).then_some(mapped)
}
