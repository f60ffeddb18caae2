//! Matcher recall on annotated ground truth and the descriptor
//! precision-recall harness.

mod desc;
mod report;

pub use desc::{
    complementarity_pairs, default_ratio_grid, desc_eval_prepare, desc_precision_recall, describe_pairs,
    precision_recall_from_descriptors, Complementarity, DescribedPairs, PrCurve, PrPoint, QueryMatch,
    DESC_EVAL_MARGIN,
};
pub use report::{svg_line_plot, write_pr_csv, write_recall_csv, PlotSeries};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descr::DescriptorError;
use crate::geometry::{model_residual, parse_matrix, GeometryError, Homography, ModelKind, Point2, TwoViewModel};
use crate::imgproc::ImageError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth has no correspondences")]
    EmptyGroundTruth,
    #[error("model kind {got} does not match ground truth kind {expected}")]
    KindMismatch { expected: ModelKind, got: ModelKind },
    #[error("no recall curves to aggregate")]
    NoCurves,
    #[error("recall curves use different threshold grids")]
    ThresholdMismatch,
    #[error("need at least 2 feature pairs, got {0}")]
    TooFewPairs(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type PointPair = (Point2, Point2);

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Correspondences(Vec<PointPair>),
    Homography(Homography),
}

/// The ground-truth variant always agrees with `kind`: correspondences for
/// `Fund`, a homography for `Hom`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPair {
    pub id: String,
    pub images: [PathBuf; 2],
    pub category: String,
    pub kind: ModelKind,
    pub truth: GroundTruth,
}

impl GroundTruthPair {
    pub fn new(id: String, images: [PathBuf; 2], category: String, truth: GroundTruth) -> Self {
        let kind = match truth {
            GroundTruth::Correspondences(_) => ModelKind::Fund,
            GroundTruth::Homography(_) => ModelKind::Hom,
        };
        Self { id, images, category, kind, truth }
    }

    pub fn homography(&self) -> Option<&Homography> {
        match &self.truth {
            GroundTruth::Homography(h) => Some(h),
            GroundTruth::Correspondences(_) => None,
        }
    }
}

/// One manifest entry. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image1: PathBuf,
    pub image2: PathBuf,
    pub category: String,
    pub model: ModelKind,
    /// CSV of `x1,y1,x2,y2` rows, required for `Fund` pairs.
    #[serde(default)]
    pub correspondences: Option<PathBuf>,
    /// Whitespace-separated 3x3 matrix, required for `Hom` pairs.
    #[serde(default)]
    pub homography: Option<PathBuf>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<GroundTruthPair>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries.into_iter().map(|e| resolve_entry(e, base)).collect()
}

fn resolve_entry(e: ManifestEntry, base: &Path) -> Result<GroundTruthPair, EvalError> {
    let truth = match (e.model, &e.correspondences, &e.homography) {
        (ModelKind::Fund, Some(c), None) => {
            let file = fs::File::open(base.join(c))
                .map_err(|err| EvalError::Manifest(format!("{}: {}: {err}", e.id, c.display())))?;
            GroundTruth::Correspondences(read_correspondences_csv(file)?)
        }
        (ModelKind::Hom, None, Some(h)) => {
            let text = fs::read_to_string(base.join(h))
                .map_err(|err| EvalError::Manifest(format!("{}: {}: {err}", e.id, h.display())))?;
            GroundTruth::Homography(Homography::new(parse_matrix(&text)?)?)
        }
        (kind, _, _) => {
            return Err(EvalError::Manifest(format!(
                "{}: a {kind} pair needs exactly the {} field",
                e.id,
                if kind == ModelKind::Fund { "correspondences" } else { "homography" }
            )))
        }
    };
    Ok(GroundTruthPair::new(e.id, [base.join(e.image1), base.join(e.image2)], e.category, truth))
}

/// Reads `x1,y1,x2,y2` rows; a header row is skipped when its first field
/// is not a number.
pub fn read_correspondences_csv<R: std::io::Read>(input: R) -> Result<Vec<PointPair>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(EvalError::Manifest(format!("row {}: expected 4 fields, got {}", i + 1, rec.len())));
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => out.push((Point2::new(v[0], v[1]), Point2::new(v[2], v[3]))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(EvalError::Manifest(format!("row {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Grid points of a `width x height` image 1 mapped through `h`, keeping
/// those landing inside image 2. Turns homography ground truth into
/// correspondences for recall.
pub fn homography_grid_correspondences(
    h: &Homography,
    size1: (usize, usize),
    size2: (usize, usize),
    per_axis: usize,
) -> Vec<PointPair> {
    let n = per_axis.max(2);
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let u = Point2::new(
                (size1.0.saturating_sub(1)) as f64 * i as f64 / (n - 1) as f64,
                (size1.1.saturating_sub(1)) as f64 * j as f64 / (n - 1) as f64,
            );
            if let Ok(v) = h.transfer(&u) {
                if v.x >= 0.0 && v.y >= 0.0 && v.x <= (size2.0 - 1) as f64 && v.y <= (size2.1 - 1) as f64 {
                    out.push((u, v));
                }
            }
        }
    }
    out
}

/// Ground-truth correspondences of a pair; homography pairs are sampled on
/// a 10x10 grid.
pub fn ground_truth_points(gt: &GroundTruthPair, size1: (usize, usize), size2: (usize, usize)) -> Vec<PointPair> {
    match &gt.truth {
        GroundTruth::Correspondences(c) => c.clone(),
        GroundTruth::Homography(h) => homography_grid_correspondences(h, size1, size2, 10),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
}

impl RecallCurve {
    /// Recall with no model: zero everywhere.
    pub fn zero(thresholds: &[f64]) -> Self {
        Self { thresholds: thresholds.to_vec(), recall: vec![0.0; thresholds.len()] }
    }
}

/// 0 to 20 px in 0.25 px steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=80).map(|i| i as f64 * 0.25).collect()
}

/// Fraction of `points` with model residual strictly below each threshold.
/// Points whose residual is undefined count as misses.
pub fn pair_recall(
    points: &[PointPair],
    kind: ModelKind,
    model: &TwoViewModel,
    thresholds: &[f64],
) -> Result<RecallCurve, EvalError> {
    if points.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    if model.kind() != kind {
        return Err(EvalError::KindMismatch { expected: kind, got: model.kind() });
    }
    let mut errors: Vec<f64> =
        points.iter().map(|(u, v)| model_residual(model, u, v).unwrap_or(f64::INFINITY)).collect();
    errors.sort_by(f64::total_cmp);
    let n = errors.len() as f64;
    let recall = thresholds.iter().map(|&t| errors.partition_point(|&e| e < t) as f64 / n).collect();
    Ok(RecallCurve { thresholds: thresholds.to_vec(), recall })
}

/// Per-threshold arithmetic mean over pairs.
pub fn category_recall(curves: &[RecallCurve]) -> Result<RecallCurve, EvalError> {
    let first = curves.first().ok_or(EvalError::NoCurves)?;
    if curves.iter().any(|c| c.thresholds != first.thresholds || c.recall.len() != first.thresholds.len()) {
        return Err(EvalError::ThresholdMismatch);
    }
    let n = curves.len() as f64;
    let recall = (0..first.thresholds.len()).map(|i| curves.iter().map(|c| c.recall[i]).sum::<f64>() / n).collect();
    Ok(RecallCurve { thresholds: first.thresholds.clone(), recall })
}
