use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::EvalError;
use crate::descr::{describe, DescriptorKind};
use crate::geometry::{Homography, Laf};
use crate::imgproc::{photometric_normalize, sample_patch, GrayImage, DEFAULT_MR_SCALE};

/// Mapped centers must stay this far inside image 2 so the measurement
/// region is mostly visible.
pub const DESC_EVAL_MARGIN: f64 = 20.0;

/// Maps image-1 frames into image 2 through the local affine approximation
/// of `h` at each center. Frames landing within the margin of the image-2
/// border, or whose mapped shape is singular, are dropped.
pub fn desc_eval_prepare(h: &Homography, lafs: &[Laf], size2: (usize, usize)) -> Vec<(Laf, Laf)> {
    let (w, ht) = (size2.0 as f64, size2.1 as f64);
    lafs.iter()
        .filter_map(|l| {
            let c = h.transfer(&l.center).ok()?;
            let inside = c.x >= DESC_EVAL_MARGIN
                && c.y >= DESC_EVAL_MARGIN
                && c.x <= w - 1.0 - DESC_EVAL_MARGIN
                && c.y <= ht - 1.0 - DESC_EVAL_MARGIN;
            if !inside {
                return None;
            }
            let j = h.jacobian(&l.center).ok()?;
            let mapped = Laf::new(c, j * l.shape).ok()?;
            Some((*l, mapped))
        })
        .collect()
}

/// Descriptors of both sides; `kept[i]` is the index of the input pair that
/// row `i` came from. Pairs where either patch is degenerate are dropped.
#[derive(Debug, Clone)]
pub struct DescribedPairs {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub kept: Vec<usize>,
}

pub fn describe_pairs(
    pairs: &[(Laf, Laf)],
    images: (&GrayImage, &GrayImage),
    kind: DescriptorKind,
) -> DescribedPairs {
    let one = |img: &GrayImage, l: &Laf| {
        describe(&photometric_normalize(&sample_patch(img, l, DEFAULT_MR_SCALE)), kind).ok().map(|d| d.values)
    };
    let mut out = DescribedPairs { first: Vec::new(), second: Vec::new(), kept: Vec::new() };
    for (i, (a, b)) in pairs.iter().enumerate() {
        if let (Some(da), Some(db)) = (one(images.0, a), one(images.1, b)) {
            out.first.push(da);
            out.second.push(db);
            out.kept.push(i);
        }
    }
    out
}

/// Nearest image-2 descriptor of one image-1 query and its second-nearest
/// distance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryMatch {
    pub nearest: usize,
    pub ratio: f64,
}

impl QueryMatch {
    pub fn correct(&self, query: usize) -> bool {
        self.nearest == query
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub ratio_threshold: f64,
    pub accepted: usize,
    pub correct: usize,
    /// 1 when nothing is accepted.
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub queries: Vec<QueryMatch>,
    pub map: f64,
}

impl PrCurve {
    /// Ground-truth rows matched correctly with ratio below `threshold`.
    pub fn correct_set(&self, threshold: f64) -> BTreeSet<usize> {
        self.queries
            .iter()
            .enumerate()
            .filter(|(i, q)| q.correct(*i) && q.ratio < threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// 0.05 to 1.0 in 0.05 steps.
pub fn default_ratio_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row `i` of `first` and row `i` of `second` form the ground-truth pair.
/// Each query is matched to its nearest neighbour among all of `second`
/// (ties to the lower index) and accepted at threshold `r` when its
/// first-to-second distance ratio is strictly below `r`.
pub fn precision_recall_from_descriptors(
    first: &[Vec<f64>],
    second: &[Vec<f64>],
    ratio_grid: &[f64],
) -> Result<PrCurve, EvalError> {
    let n = first.len();
    if n < 2 || second.len() < 2 {
        return Err(EvalError::TooFewPairs(n.min(second.len())));
    }
    let queries: Vec<QueryMatch> = first
        .iter()
        .map(|q| {
            let (mut b1, mut d1, mut d2) = (0usize, f64::INFINITY, f64::INFINITY);
            for (j, c) in second.iter().enumerate() {
                let d = sq_dist(q, c);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    b1 = j;
                } else if d < d2 {
                    d2 = d;
                }
            }
            let ratio = if d2 > 0.0 { (d1 / d2).sqrt() } else { 1.0 };
            QueryMatch { nearest: b1, ratio }
        })
        .collect();
    let points: Vec<PrPoint> = ratio_grid
        .iter()
        .map(|&r| {
            let accepted = queries.iter().filter(|q| q.ratio < r).count();
            let correct = queries.iter().enumerate().filter(|(i, q)| q.ratio < r && q.correct(*i)).count();
            let precision = if accepted == 0 { 1.0 } else { correct as f64 / accepted as f64 };
            PrPoint { ratio_threshold: r, accepted, correct, precision, recall: correct as f64 / n as f64 }
        })
        .collect();
    let map = average_precision(&points);
    Ok(PrCurve { points, queries, map })
}

/// Trapezoidal area under precision over recall. Points that accept nothing
/// are skipped; the curve is extended flat from recall 0 to its first
/// point.
fn average_precision(points: &[PrPoint]) -> f64 {
    let mut pr: Vec<(f64, f64)> = points.iter().filter(|p| p.accepted > 0).map(|p| (p.recall, p.precision)).collect();
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let Some(&(r0, p0)) = pr.first() else { return 0.0 };
    let mut area = r0 * p0;
    for w in pr.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area.clamp(0.0, 1.0)
}

/// Describes every pair and sweeps the ratio threshold. Recall is relative
/// to the pairs that could be described.
pub fn desc_precision_recall(
    pairs: &[(Laf, Laf)],
    images: (&GrayImage, &GrayImage),
    kind: DescriptorKind,
    ratio_grid: &[f64],
) -> Result<(PrCurve, DescribedPairs), EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::TooFewPairs(pairs.len()));
    }
    let described = describe_pairs(pairs, images, kind);
    let curve = precision_recall_from_descriptors(&described.first, &described.second, ratio_grid)?;
    Ok((curve, described))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Complementarity {
    pub first: String,
    pub second: String,
    pub union: usize,
}

/// Every unordered pair of descriptors ranked by the size of the union of
/// their correctly matched ground-truth sets, largest first, then by name.
pub fn complementarity_pairs(results: &BTreeMap<String, BTreeSet<usize>>) -> Vec<Complementarity> {
    let names: Vec<&String> = results.keys().collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let union = results[*a].union(&results[*b]).count();
            out.push(Complementarity { first: (*a).clone(), second: (*b).clone(), union });
        }
    }
    out.sort_by(|x, y| y.union.cmp(&x.union).then_with(|| (&x.first, &x.second).cmp(&(&y.first, &y.second))));
    out
}
