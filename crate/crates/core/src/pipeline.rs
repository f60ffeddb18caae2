//! The iterative matcher. Each iteration synthesizes more views of both
//! images, detects and describes features in the new views only, and
//! verifies the pooled tentative correspondences. The loop stops as soon as
//! enough correspondences survive verification.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descr::{describe, DescriptorKind};
use crate::detect::{detect_in_pyramid, keypoint_to_laf, orientations_in_pyramid, DetectorConfig, DetectorKind, OrientationMode, MIN_IMAGE_SIZE};
use crate::geometry::{Laf, ModelKind, TwoViewModel};
use crate::imgproc::{photometric_normalize, sample_patch, GaussianPyramid, GrayImage, DEFAULT_MR_SCALE};
use crate::matching::{filter_duplicates, generate_tentative, Channel, Correspondence, FeatureRecord, MatchParams};
use crate::verify::{default_laf_threshold, laf_consistent, ransac_verify, RansacConfig, WantModel};
use crate::viewsynth::{backproject_one, synthesize_view, view_params, SynthSchedule, SynthView, ViewParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid matcher configuration: {0}")]
    Config(String),
    #[error("image is {width}x{height}, need at least {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub schedule: SynthSchedule,
    /// Verified correspondences needed to stop.
    #[serde(alias = "thetaM")]
    pub theta_m: usize,
    /// Iterations run at most; also bounded by the schedule length.
    #[serde(alias = "sMax")]
    pub s_max: usize,
    pub dog: DetectorConfig,
    pub hessian: DetectorConfig,
    /// Keypoint budget of an unwarped view; other views get it scaled by
    /// their area relative to the source.
    pub features_per_view: usize,
    /// One matching channel per detector and descriptor kind.
    pub descriptors: Vec<DescriptorKind>,
    pub mr_scale: f64,
    pub photometric_normalization: bool,
    pub matching: MatchParams,
    pub ransac: RansacConfig,
    pub want_model: WantModel,
    /// LAF filter threshold; `None` means three times the RANSAC threshold.
    pub laf_threshold: Option<f64>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            schedule: SynthSchedule::default(),
            theta_m: 15,
            s_max: 3,
            dog: DetectorConfig::dog(),
            hessian: DetectorConfig::hessian(),
            features_per_view: 1000,
            descriptors: vec![DescriptorKind::RootSift, DescriptorKind::HalfRootSift],
            mr_scale: DEFAULT_MR_SCALE,
            photometric_normalization: true,
            matching: MatchParams::default(),
            ransac: RansacConfig::default(),
            want_model: WantModel::Auto,
            laf_threshold: None,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        self.schedule.validate().map_err(PipelineError::Config)?;
        let m = match self.want_model {
            WantModel::Hom => ModelKind::Hom.minimal_sample_size(),
            WantModel::Fund | WantModel::Auto => ModelKind::Fund.minimal_sample_size(),
        };
        if self.theta_m < m {
            return err(format!("theta_m must be at least {m} for model {}", self.want_model));
        }
        if self.s_max == 0 {
            return err("s_max must be at least 1".into());
        }
        if self.descriptors.is_empty() {
            return err("at least one descriptor kind is required".into());
        }
        if self.features_per_view == 0 {
            return err("features_per_view must be positive".into());
        }
        if !(self.mr_scale > 0.0 && self.mr_scale.is_finite()) {
            return err("mr_scale must be positive".into());
        }
        self.dog.validate().map_err(|e| PipelineError::Config(format!("dog: {e}")))?;
        self.hessian.validate().map_err(|e| PipelineError::Config(format!("hessian: {e}")))?;
        self.ransac.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn detector(&self, kind: DetectorKind) -> &DetectorConfig {
        match kind {
            DetectorKind::Dog => &self.dog,
            DetectorKind::Hessian => &self.hessian,
        }
    }

    fn laf_threshold(&self) -> f64 {
        self.laf_threshold.unwrap_or_else(|| default_laf_threshold(self.ransac.inlier_threshold))
    }
}

/// Orientation binning matched to a descriptor: half-angle descriptors get
/// frames that are themselves invariant to intensity inversion.
pub fn orientation_mode_for(kind: DescriptorKind) -> OrientationMode {
    match kind {
        DescriptorKind::HalfSift | DescriptorKind::HalfRootSift => OrientationMode::Half,
        _ => OrientationMode::Full,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescribeOutput {
    pub records: Vec<FeatureRecord>,
    /// Frames skipped because their patch has no gradient.
    pub degenerate: usize,
    /// Frames whose center maps outside the source image.
    pub dropped: usize,
}

fn describe_with<F>(
    view: &SynthView,
    view_id: usize,
    detector: DetectorKind,
    lafs: &[Laf],
    kinds: &[DescriptorKind],
    normalize: bool,
    sample: F,
) -> DescribeOutput
where
    F: Fn(&Laf) -> crate::imgproc::Patch,
{
    let mut out = DescribeOutput::default();
    for laf in lafs {
        let Some(original) = backproject_one(view, laf) else {
            out.dropped += 1;
            continue;
        };
        let patch = sample(laf);
        let patch = if normalize { photometric_normalize(&patch) } else { patch };
        let Ok(descriptors) = kinds.iter().map(|&k| describe(&patch, k)).collect::<Result<Vec<_>, _>>() else {
            out.degenerate += 1;
            continue;
        };
        out.records.extend(kinds.iter().zip(descriptors).map(|(&kind, descriptor)| FeatureRecord {
            laf: original,
            descriptor,
            channel: Channel { detector, descriptor: kind },
            view_id,
        }));
    }
    out
}

/// Describes view-frame `lafs` on patches sampled from the view image and
/// stores the frames mapped back to original coordinates. Each kept frame
/// yields one record per descriptor kind.
pub fn describe_features(
    view: &SynthView,
    view_id: usize,
    detector: DetectorKind,
    lafs: &[Laf],
    kinds: &[DescriptorKind],
    mr_scale: f64,
) -> DescribeOutput {
    describe_with(view, view_id, detector, lafs, kinds, true, |l| sample_patch(&view.image, l, mr_scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    /// Views processed so far for image 1 and image 2.
    pub view_counts: [usize; 2],
    /// Feature records so far for image 1 and image 2.
    pub feature_counts: [usize; 2],
    pub tc_count: usize,
    pub ransac_inliers: usize,
    /// After the LAF consistency filter.
    pub inlier_count: usize,
    pub model: Option<TwoViewModel>,
    pub verification_error: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub succeeded: bool,
    /// Best model found, also when the loop failed.
    pub model: Option<TwoViewModel>,
    pub degenerate: bool,
    pub correspondences: Vec<Correspondence>,
    pub per_iteration: Vec<IterationReport>,
}

/// Views and features of one image, grown iteration by iteration.
struct ImageState<'a> {
    image: &'a GrayImage,
    views: Vec<ViewParams>,
    done: HashSet<((i64, i64, i64), DetectorKind)>,
    records: Vec<FeatureRecord>,
}

impl<'a> ImageState<'a> {
    fn new(image: &'a GrayImage) -> Self {
        Self { image, views: Vec::new(), done: HashSet::new(), records: Vec::new() }
    }

    /// Processes the views of `params` not yet seen with their detectors.
    fn extend(&mut self, params: &[ViewParams], detectors: &[DetectorKind], cfg: &MatcherConfig) {
        let mut jobs: Vec<(ViewParams, usize, Vec<DetectorKind>)> = Vec::new();
        for p in params {
            let new: Vec<DetectorKind> = detectors.iter().copied().filter(|d| !self.done.contains(&(p.key(), *d))).collect();
            if new.is_empty() {
                continue;
            }
            let id = match self.views.iter().position(|v| v.key() == p.key()) {
                Some(id) => id,
                None => {
                    self.views.push(*p);
                    self.views.len() - 1
                }
            };
            for d in &new {
                self.done.insert((p.key(), *d));
            }
            jobs.push((*p, id, new));
        }
        let image = self.image;
        let results: Vec<Vec<FeatureRecord>> =
            jobs.par_iter().map(|(p, id, dets)| process_view(image, *p, *id, dets, cfg)).collect();
        for r in results {
            self.records.extend(r);
        }
    }
}

fn process_view(image: &GrayImage, params: ViewParams, view_id: usize, detectors: &[DetectorKind], cfg: &MatcherConfig) -> Vec<FeatureRecord> {
    let view = synthesize_view(image, params);
    if view.image.width() < MIN_IMAGE_SIZE || view.image.height() < MIN_IMAGE_SIZE {
        return Vec::new();
    }
    let quota = ((cfg.features_per_view as f64 * view.area_ratio()).ceil() as usize).max(1);
    let mut pyramids: Vec<(crate::imgproc::PyramidParams, GaussianPyramid)> = Vec::new();
    let mut out = Vec::new();
    for &det in detectors {
        let dcfg = DetectorConfig { max_features: Some(cfg.detector(det).max_features.map_or(quota, |m| m.min(quota))), ..*cfg.detector(det) };
        let pyr_index = match pyramids.iter().position(|(p, _)| *p == dcfg.pyramid) {
            Some(i) => i,
            None => {
                pyramids.push((dcfg.pyramid, GaussianPyramid::build(&view.image, dcfg.pyramid)));
                pyramids.len() - 1
            }
        };
        let pyr = &pyramids[pyr_index].1;
        let keypoints = detect_in_pyramid(pyr, &dcfg, det).keypoints;
        // frames whose measurement region leaves the warped source would
        // describe the synthetic black border
        let keypoints: Vec<_> = keypoints
            .into_iter()
            .filter(|k| view.boundary_distance(&crate::geometry::Point2::new(k.x, k.y)) >= 2.0 * k.sigma)
            .collect();
        let mut modes: Vec<OrientationMode> = cfg.descriptors.iter().map(|d| orientation_mode_for(*d)).collect();
        modes.sort_by_key(|m| *m as u8);
        modes.dedup();
        for mode in modes {
            let kinds: Vec<DescriptorKind> = cfg.descriptors.iter().copied().filter(|d| orientation_mode_for(*d) == mode).collect();
            let lafs: Vec<Laf> = keypoints
                .iter()
                .flat_map(|k| orientations_in_pyramid(pyr, k, mode).into_iter().map(move |o| keypoint_to_laf(k, o)))
                .collect();
            let described = describe_with(&view, view_id, det, &lafs, &kinds, cfg.photometric_normalization, |l| {
                pyr.sample_patch(l, cfg.mr_scale)
            });
            out.extend(described.records);
        }
    }
    out
}

struct Verified {
    model: TwoViewModel,
    degenerate: bool,
    ransac_inliers: usize,
    correspondences: Vec<Correspondence>,
}

fn verify_tcs(tcs: &[Correspondence], cfg: &MatcherConfig) -> Result<Verified, String> {
    let v = ransac_verify(tcs, cfg.want_model, &cfg.ransac).map_err(|e| e.to_string())?;
    let threshold = cfg.laf_threshold();
    let correspondences: Vec<Correspondence> =
        v.inliers.iter().map(|&i| tcs[i]).filter(|c| laf_consistent(&v.model, c, threshold)).collect();
    Ok(Verified { model: v.model, degenerate: v.degenerate, ransac_inliers: v.inliers.len(), correspondences })
}

/// Runs the iterative matcher on two grayscale images.
pub fn match_pair(img1: &GrayImage, img2: &GrayImage, cfg: &MatcherConfig) -> Result<MatchReport, PipelineError> {
    cfg.validate()?;
    for img in [img1, img2] {
        if img.width() < MIN_IMAGE_SIZE || img.height() < MIN_IMAGE_SIZE {
            return Err(PipelineError::TooSmall { width: img.width(), height: img.height(), min: MIN_IMAGE_SIZE });
        }
    }
    let mut s1 = ImageState::new(img1);
    let mut s2 = ImageState::new(img2);
    let mut per_iteration = Vec::new();
    let mut best: Option<Verified> = None;
    let mut succeeded = false;
    let iterations = cfg.s_max.min(cfg.schedule.iterations.len());
    for (it, entry) in cfg.schedule.iterations.iter().take(iterations).enumerate() {
        let start = Instant::now();
        let params = view_params(entry);
        rayon::join(
            || s1.extend(&params, &entry.detectors, cfg),
            || s2.extend(&params, &entry.detectors, cfg),
        );
        let tcs = generate_tentative(&s1.records, &s2.records, &cfg.matching);
        let tcs = filter_duplicates(&tcs, cfg.matching.dedup_radius);
        let verified = verify_tcs(&tcs, cfg);
        let (ransac_inliers, inlier_count, model, verification_error) = match &verified {
            Ok(v) => (v.ransac_inliers, v.correspondences.len(), Some(v.model), None),
            Err(e) => (0, 0, None, Some(e.clone())),
        };
        per_iteration.push(IterationReport {
            iteration: it + 1,
            view_counts: [s1.views.len(), s2.views.len()],
            feature_counts: [s1.records.len(), s2.records.len()],
            tc_count: tcs.len(),
            ransac_inliers,
            inlier_count,
            model,
            verification_error,
            elapsed: start.elapsed(),
        });
        if let Ok(v) = verified {
            if best.as_ref().is_none_or(|b| v.correspondences.len() > b.correspondences.len()) {
                best = Some(v);
            }
        }
        if inlier_count >= cfg.theta_m {
            succeeded = true;
            break;
        }
    }
    Ok(match best {
        Some(b) => MatchReport {
            succeeded,
            model: Some(b.model),
            degenerate: b.degenerate,
            correspondences: b.correspondences,
            per_iteration,
        },
        None => MatchReport { succeeded: false, model: None, degenerate: false, correspondences: Vec::new(), per_iteration },
    })
}
