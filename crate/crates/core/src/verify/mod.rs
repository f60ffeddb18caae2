//! Robust two-view verification: locally optimized RANSAC for homographies
//! and fundamental matrices with dominant-plane detection on every new best
//! fundamental-matrix sample, and the LAF consistency filter.

mod solvers;

pub use solvers::{
    check_sample_h_degeneracy, estimate_fundamental_7pt, estimate_fundamental_lsq, estimate_homography_4pt,
    estimate_homography_lsq, homography_from_f_and_3pt, plane_and_parallax,
};

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{laf_to_point_triple, model_residual, FundamentalMatrix, Homography, ModelKind, Point2, TwoViewModel};
use crate::matching::Correspondence;

/// Image-1 point and image-2 point.
pub type PointPair = (Point2, Point2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("insufficient TCs: need {need}, got {got}")]
    InsufficientTcs { need: usize, got: usize },
    #[error("verification failed: best model has {inliers} inliers, need {need}")]
    Failed { inliers: usize, need: usize },
    #[error("solver expects {expected} correspondences, got {got}")]
    SampleSize { expected: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("invalid RANSAC configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WantModel {
    Fund,
    Hom,
    Auto,
}

impl fmt::Display for WantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WantModel::Fund => "fund",
            WantModel::Hom => "hom",
            WantModel::Auto => "auto",
        })
    }
}

impl FromStr for WantModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fund" | "f" | "fundamental" => Ok(WantModel::Fund),
            "hom" | "h" | "homography" => Ok(WantModel::Hom),
            "auto" => Ok(WantModel::Auto),
            _ => Err(format!("unknown model `{s}` (expected fund, hom or auto)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Pixels, compared against [`model_residual`].
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub max_samples: usize,
    pub lo_iterations: usize,
    pub seed: u64,
    /// Dominant-plane test on fundamental-matrix samples. Off gives plain
    /// LO-RANSAC.
    pub degeneracy_check: bool,
    /// Transfer tolerance of the dominant-plane test, in units of
    /// `inlier_threshold`. Homographies from minimal samples extrapolate
    /// noise, so coplanar sample points miss the plain threshold.
    pub plane_tolerance_factor: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 2.0,
            confidence: 0.99,
            max_samples: 10_000,
            lo_iterations: 3,
            seed: 42,
            degeneracy_check: true,
            plane_tolerance_factor: 2.0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(VerifyError::Config("inlier_threshold must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(VerifyError::Config("confidence must lie in (0, 1)".into()));
        }
        if !(self.plane_tolerance_factor > 0.0) {
            return Err(VerifyError::Config("plane_tolerance_factor must be positive".into()));
        }
        if self.max_samples == 0 {
            return Err(VerifyError::Config("max_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub model: TwoViewModel,
    /// Ascending indices into the verified correspondence list.
    pub inliers: Vec<usize>,
    /// A dominant plane was detected in the winning sample.
    pub degenerate: bool,
    pub samples_used: usize,
}

impl VerificationResult {
    pub fn inlier_correspondences(&self, tcs: &[Correspondence]) -> Vec<Correspondence> {
        self.inliers.iter().map(|&i| tcs[i]).collect()
    }
}

/// Minimum inlier support for accepting a model of this kind.
pub fn min_inliers(kind: ModelKind) -> usize {
    10.max(2 * kind.minimal_sample_size())
}

fn inliers_of(model: &TwoViewModel, pts: &[PointPair], threshold: f64) -> Vec<usize> {
    pts.iter()
        .enumerate()
        .filter(|(_, (u, v))| model_residual(model, u, v).is_ok_and(|r| r < threshold))
        .map(|(i, _)| i)
        .collect()
}

fn count_inliers(model: &TwoViewModel, pts: &[PointPair], threshold: f64) -> usize {
    pts.iter().filter(|(u, v)| model_residual(model, u, v).is_ok_and(|r| r < threshold)).count()
}

/// Samples needed to draw one all-inlier minimal sample with the requested
/// confidence.
fn required_samples(inliers: usize, n: usize, m: usize, confidence: f64, cap: usize) -> usize {
    let w = inliers as f64 / n as f64;
    let p_good = w.powi(m as i32);
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return cap;
    }
    let k = ((1.0 - confidence).ln() / (1.0 - p_good).ln()).ceil();
    if k.is_finite() && k >= 0.0 {
        (k as usize).clamp(1, cap)
    } else {
        cap
    }
}

#[derive(Clone)]
struct Hypothesis {
    model: TwoViewModel,
    inliers: usize,
    degenerate: bool,
}

fn refit(kind: ModelKind, pts: &[PointPair], ids: &[usize]) -> Option<TwoViewModel> {
    let subset: Vec<PointPair> = ids.iter().map(|&i| pts[i]).collect();
    match kind {
        ModelKind::Hom => estimate_homography_lsq(&subset).ok().map(TwoViewModel::Homography),
        ModelKind::Fund => estimate_fundamental_lsq(&subset).ok().map(TwoViewModel::Fundamental),
    }
}

/// Initial inlier-set threshold of local optimization, in units of the
/// inlier threshold.
const LO_THRESHOLD_FACTOR: f64 = 2.0;

/// Iterated least squares: each round refits on the inliers of the current
/// model under a threshold shrinking from `LO_THRESHOLD_FACTOR` times the
/// inlier threshold down to it. Keeps the model with the most inliers.
fn local_optimization(h: Hypothesis, pts: &[PointPair], cfg: &RansacConfig) -> Hypothesis {
    let mut best = h;
    let mut current = best.model;
    let rounds = cfg.lo_iterations;
    for k in 0..rounds {
        let shrink = if rounds > 1 { 1.0 - k as f64 / (rounds - 1) as f64 } else { 0.0 };
        let t = cfg.inlier_threshold * (1.0 + (LO_THRESHOLD_FACTOR - 1.0) * shrink);
        let ids = inliers_of(&current, pts, t);
        let Some(model) = refit(current.kind(), pts, &ids) else { break };
        current = model;
        let count = count_inliers(&model, pts, cfg.inlier_threshold);
        if count > best.inliers {
            best = Hypothesis { model, inliers: count, degenerate: best.degenerate };
        }
    }
    best
}

/// Fundamental matrix for a scene dominated by the plane of `h`: pairs of
/// off-plane correspondences fix the epipole. `None` when no candidate is
/// supported by at least two off-plane inliers besides its own pair.
fn parallax_search(h: &Homography, pts: &[PointPair], cfg: &RansacConfig, rng: &mut ChaCha8Rng) -> Option<Hypothesis> {
    let hm = TwoViewModel::Homography(*h);
    let off: Vec<usize> = (0..pts.len())
        .filter(|&i| !model_residual(&hm, &pts[i].0, &pts[i].1).is_ok_and(|r| r < cfg.inlier_threshold))
        .collect();
    if off.len() < 4 {
        return None;
    }
    let pairs = off.len() * (off.len() - 1) / 2;
    let cap = pairs.min((cfg.max_samples / 4).max(100));
    let mut limit = cap;
    let mut best: Option<(Hypothesis, usize)> = None;
    let mut drawn = 0;
    while drawn < limit {
        drawn += 1;
        let s = sample(rng, off.len(), 2);
        let (a, b) = (off[s.index(0)], off[s.index(1)]);
        let Ok(f) = plane_and_parallax(h, &pts[a], &pts[b]) else { continue };
        let model = TwoViewModel::Fundamental(f);
        let ids = inliers_of(&model, pts, cfg.inlier_threshold);
        let off_support = off.iter().filter(|i| ids.binary_search(i).is_ok()).count().saturating_sub(2);
        if off_support < 2 || best.as_ref().is_some_and(|(b, _)| b.inliers >= ids.len()) {
            continue;
        }
        best = Some((Hypothesis { model, inliers: ids.len(), degenerate: true }, off_support));
        let off_inliers = off_support + 2;
        limit = required_samples(off_inliers, off.len(), 2, cfg.confidence, cap);
    }
    best.map(|(h, _)| local_optimization(h, pts, cfg))
}

fn is_better(candidate: &Hypothesis, best: &Option<Hypothesis>) -> bool {
    best.as_ref().is_none_or(|b| candidate.inliers > b.inliers)
}

/// DEGENSAC step for a new best fundamental-matrix sample. If five of the
/// seven sample points share a homography, the plane is refit on all
/// correspondences and the epipole is searched among off-plane ones; when
/// that fails the plane itself is returned. Without a fundamental-matrix
/// candidate, only a plane that beats `best` is pursued.
fn dominant_plane_branch(
    s: &[PointPair],
    sample_f: Option<&FundamentalMatrix>,
    candidate: Option<Hypothesis>,
    best: &Option<Hypothesis>,
    pts: &[PointPair],
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Hypothesis> {
    let Some(h) = check_sample_h_degeneracy(s, sample_f, cfg.plane_tolerance_factor * cfg.inlier_threshold) else { return candidate };
    let hm = TwoViewModel::Homography(h);
    let plane = local_optimization(
        Hypothesis { inliers: count_inliers(&hm, pts, cfg.inlier_threshold), model: hm, degenerate: true },
        pts,
        cfg,
    );
    if candidate.is_none() && !is_better(&plane, best) {
        return None;
    }
    let TwoViewModel::Homography(hp) = plane.model else { unreachable!("refit keeps the kind") };
    Some(match (parallax_search(&hp, pts, cfg, rng), candidate) {
        (Some(f), Some(c)) if c.inliers > f.inliers => Hypothesis { degenerate: true, ..c },
        (Some(f), _) => f,
        (None, _) => plane,
    })
}

fn ransac_kind(pts: &[PointPair], kind: ModelKind, cfg: &RansacConfig, rng: &mut ChaCha8Rng) -> (Option<Hypothesis>, usize) {
    let n = pts.len();
    let m = kind.minimal_sample_size();
    let mut best: Option<Hypothesis> = None;
    let mut limit = cfg.max_samples;
    let mut drawn = 0;
    while drawn < limit {
        drawn += 1;
        let ids = sample(rng, n, m).into_vec();
        let s: Vec<PointPair> = ids.iter().map(|&i| pts[i]).collect();
        let models: Vec<TwoViewModel> = match kind {
            ModelKind::Hom => estimate_homography_4pt(&s).map(|h| vec![TwoViewModel::Homography(h)]).unwrap_or_default(),
            ModelKind::Fund => estimate_fundamental_7pt(&s)
                .map(|fs| fs.into_iter().map(TwoViewModel::Fundamental).collect())
                .unwrap_or_default(),
        };
        let candidate = models
            .into_iter()
            .map(|model| Hypothesis { inliers: count_inliers(&model, pts, cfg.inlier_threshold), model, degenerate: false })
            .max_by_key(|h| h.inliers);
        // planar samples make the seven-point system rank deficient, so the
        // plane test also runs when the solver gives up
        let plane_test = kind == ModelKind::Fund && cfg.degeneracy_check;
        let candidate = match candidate {
            Some(c) if is_better(&c, &best) => {
                let sample_f = match c.model {
                    TwoViewModel::Fundamental(f) => Some(f),
                    TwoViewModel::Homography(_) => None,
                };
                let c = local_optimization(c, pts, cfg);
                if plane_test {
                    dominant_plane_branch(&s, sample_f.as_ref(), Some(c.clone()), &best, pts, cfg, rng).unwrap_or(c)
                } else {
                    c
                }
            }
            None if plane_test => match dominant_plane_branch(&s, None, None, &best, pts, cfg, rng) {
                Some(c) => c,
                None => continue,
            },
            _ => continue,
        };
        if is_better(&candidate, &best) {
            limit = required_samples(candidate.inliers, n, m, cfg.confidence, cfg.max_samples);
            best = Some(candidate);
        }
    }
    (best, drawn)
}

/// Robust estimation on raw point pairs. Inliers are recomputed from the
/// final model, so each satisfies `model_residual < inlier_threshold`.
pub fn ransac_points(pts: &[PointPair], want: WantModel, cfg: &RansacConfig) -> Result<VerificationResult, VerifyError> {
    cfg.validate()?;
    let need = match want {
        WantModel::Hom => ModelKind::Hom.minimal_sample_size(),
        WantModel::Fund | WantModel::Auto => ModelKind::Fund.minimal_sample_size(),
    };
    if pts.len() < need {
        return Err(VerifyError::InsufficientTcs { need, got: pts.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (best, samples_used) = match want {
        WantModel::Hom => ransac_kind(pts, ModelKind::Hom, cfg, &mut rng),
        WantModel::Fund => ransac_kind(pts, ModelKind::Fund, cfg, &mut rng),
        WantModel::Auto => {
            let (f, nf) = ransac_kind(pts, ModelKind::Fund, cfg, &mut rng);
            let (h, nh) = ransac_kind(pts, ModelKind::Hom, cfg, &mut rng);
            let pick = match (f, h) {
                (Some(f), Some(h)) => {
                    if h.inliers as f64 >= 0.95 * f.inliers as f64 {
                        Some(h)
                    } else {
                        Some(f)
                    }
                }
                (f, h) => f.or(h),
            };
            (pick, nf + nh)
        }
    };
    let Some(best) = best else {
        return Err(VerifyError::Failed { inliers: 0, need: min_inliers(ModelKind::Hom) });
    };
    let inliers = inliers_of(&best.model, pts, cfg.inlier_threshold);
    let need = min_inliers(best.model.kind());
    if inliers.len() < need {
        return Err(VerifyError::Failed { inliers: inliers.len(), need });
    }
    Ok(VerificationResult { model: best.model, inliers, degenerate: best.degenerate, samples_used })
}

/// Robust estimation over tentative correspondences (their LAF centers).
pub fn ransac_verify(tcs: &[Correspondence], want: WantModel, cfg: &RansacConfig) -> Result<VerificationResult, VerifyError> {
    let pts: Vec<PointPair> = tcs.iter().map(Correspondence::points).collect();
    ransac_points(&pts, want, cfg)
}

/// All three point pairs of the expanded LAFs have residual below
/// `threshold`; residuals that cannot be evaluated count as failures.
pub fn laf_consistent(model: &TwoViewModel, c: &Correspondence, threshold: f64) -> bool {
    let (a0, a1, a2) = laf_to_point_triple(&c.a.laf);
    let (b0, b1, b2) = laf_to_point_triple(&c.b.laf);
    [(a0, b0), (a1, b1), (a2, b2)]
        .iter()
        .all(|(u, v)| model_residual(model, u, v).is_ok_and(|r| r < threshold))
}

/// Keeps correspondences whose LAFs agree with the model.
pub fn laf_consistency_filter_model(tcs: &[Correspondence], model: &TwoViewModel, threshold: f64) -> Vec<Correspondence> {
    tcs.iter().filter(|c| laf_consistent(model, c, threshold)).copied().collect()
}

pub fn laf_consistency_filter(tcs: &[Correspondence], f: &FundamentalMatrix, threshold: f64) -> Vec<Correspondence> {
    laf_consistency_filter_model(tcs, &TwoViewModel::Fundamental(*f), threshold)
}

/// The LAF filter threshold paired with a RANSAC threshold: frame-axis
/// endpoints are noisier than centers.
pub fn default_laf_threshold(inlier_threshold: f64) -> f64 {
    3.0 * inlier_threshold
}
