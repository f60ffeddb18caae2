//! Minimal and least-squares solvers on Hartley-normalized coordinates.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{PointPair, VerifyError};
use crate::geometry::{cross_matrix, sym_reprojection_error, FundamentalMatrix, Homography, Point2};

/// Similarity moving the centroid to the origin with mean distance `sqrt 2`.
fn normalization<'a>(points: impl Iterator<Item = &'a Point2> + Clone) -> Matrix3<f64> {
    let n = points.clone().count().max(1) as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean = points.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let k = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(k, 0.0, -k * cx, 0.0, k, -k * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: &Point2) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

struct Normalized {
    t1: Matrix3<f64>,
    t2: Matrix3<f64>,
    pts: Vec<((f64, f64), (f64, f64))>,
}

fn normalize(pts: &[PointPair]) -> Normalized {
    let t1 = normalization(pts.iter().map(|p| &p.0));
    let t2 = normalization(pts.iter().map(|p| &p.1));
    let pts = pts.iter().map(|(u, v)| (apply(&t1, u), apply(&t2, v))).collect();
    Normalized { t1, t2, pts }
}

/// Right singular vectors of the stacked rows, ascending by singular value.
/// Rows are zero-padded to a square system so the full basis is available.
fn right_singular(rows: &[[f64; 9]]) -> Vec<(f64, [f64; 9])> {
    let m = DMatrix::from_fn(rows.len().max(9), 9, |r, c| rows.get(r).map_or(0.0, |row| row[c]));
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut out: Vec<(f64, [f64; 9])> = (0..9)
        .map(|i| {
            let mut v = [0.0; 9];
            for (c, x) in v.iter_mut().enumerate() {
                *x = v_t[(i, c)];
            }
            (svd.singular_values[i], v)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn to_matrix(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

fn twice_area(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
}

const COLLINEAR_EPS: f64 = 1e-8;

fn homography_rows(pts: &[((f64, f64), (f64, f64))]) -> Vec<[f64; 9]> {
    let mut rows = Vec::with_capacity(2 * pts.len());
    for &((x, y), (xp, yp)) in pts {
        rows.push([0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp]);
        rows.push([x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y, -xp]);
    }
    rows
}

fn solve_homography(n: &Normalized) -> Result<Homography, VerifyError> {
    let basis = right_singular(&homography_rows(&n.pts));
    let hn = to_matrix(&basis[0].1);
    let t2_inv = n.t2.try_inverse().ok_or(VerifyError::Degenerate("normalization"))?;
    Homography::new(t2_inv * hn * n.t1).map_err(|_| VerifyError::Degenerate("singular homography"))
}

/// Exact homography through four correspondences.
pub fn estimate_homography_4pt(pts: &[PointPair]) -> Result<Homography, VerifyError> {
    if pts.len() != 4 {
        return Err(VerifyError::SampleSize { expected: 4, got: pts.len() });
    }
    let n = normalize(pts);
    for side in 0..2 {
        let p: Vec<(f64, f64)> = n.pts.iter().map(|q| if side == 0 { q.0 } else { q.1 }).collect();
        for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if twice_area(p[i], p[j], p[k]) < COLLINEAR_EPS {
                return Err(VerifyError::Degenerate("collinear triple"));
            }
        }
    }
    solve_homography(&n)
}

/// Algebraic least-squares homography over four or more correspondences.
pub fn estimate_homography_lsq(pts: &[PointPair]) -> Result<Homography, VerifyError> {
    if pts.len() < 4 {
        return Err(VerifyError::SampleSize { expected: 4, got: pts.len() });
    }
    solve_homography(&normalize(pts))
}

fn epipolar_rows(pts: &[((f64, f64), (f64, f64))]) -> Vec<[f64; 9]> {
    pts.iter()
        .map(|&((x, y), (xp, yp))| [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0])
        .collect()
}

/// Back from normalized coordinates, with rank 2 enforced on both sides.
fn denormalize_f(fh: Matrix3<f64>, n: &Normalized) -> Option<FundamentalMatrix> {
    let fh = FundamentalMatrix::new(fh).ok()?;
    FundamentalMatrix::new(n.t2.transpose() * fh.matrix() * n.t1).ok()
}

/// Real roots of `c[3] x^3 + c[2] x^2 + c[1] x + c[0]`.
fn real_cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let [d, cc, b, a] = c.map(|v| v / scale);
    let mut roots = if a.abs() < 1e-12 {
        if b.abs() < 1e-12 {
            if cc.abs() < 1e-12 {
                Vec::new()
            } else {
                vec![-d / cc]
            }
        } else {
            let disc = cc * cc - 4.0 * b * d;
            if disc < 0.0 {
                Vec::new()
            } else {
                let sign = if cc >= 0.0 { 1.0 } else { -1.0 };
                let q = -0.5 * (cc + sign * disc.sqrt());
                let mut r = Vec::new();
                if q != 0.0 {
                    r.push(d / q);
                    r.push(q / b);
                } else {
                    r.push(0.0);
                }
                r
            }
        }
    } else {
        // depressed cubic t^3 + p t + q with x = t - b/(3a)
        let (b, cc, d) = (b / a, cc / a, d / a);
        let p = cc - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * cc / 3.0 + d;
        let shift = -b / 3.0;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let s = disc.sqrt();
            vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
        } else if p.abs() < 1e-300 {
            vec![shift]
        } else {
            let r = 2.0 * (-p / 3.0).sqrt();
            let phi = (3.0 * q / (p * r)).clamp(-1.0, 1.0).acos() / 3.0;
            (0..3).map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift).collect()
        }
    };
    // Newton polishing
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((a * *x + b) * *x + cc) * *x + d;
            let df = (3.0 * a * *x + 2.0 * b) * *x + cc;
            if df.abs() > 1e-300 {
                let nx = *x - f / df;
                if nx.is_finite() {
                    *x = nx;
                }
            }
        }
    }
    roots
}

/// Seven-point solver: one to three fundamental matrices, each rank 2.
pub fn estimate_fundamental_7pt(pts: &[PointPair]) -> Result<Vec<FundamentalMatrix>, VerifyError> {
    if pts.len() != 7 {
        return Err(VerifyError::SampleSize { expected: 7, got: pts.len() });
    }
    let n = normalize(pts);
    let basis = right_singular(&epipolar_rows(&n.pts));
    let largest = basis[8].0;
    if largest == 0.0 || basis[2].0 <= 1e-10 * largest {
        return Err(VerifyError::Degenerate("degenerate sample"));
    }
    let f1 = to_matrix(&basis[0].1);
    let f2 = to_matrix(&basis[1].1);
    // det(a F1 + (1 - a) F2) is a cubic in a; recover it from four samples
    let det = |a: f64| (f1 * a + f2 * (1.0 - a)).determinant();
    let (y0, y1, ym, y2) = (det(0.0), det(1.0), det(-1.0), det(2.0));
    let c0 = y0;
    let c2 = 0.5 * (y1 + ym) - y0;
    let c3 = (y2 - 2.0 * y1 + y0 - 2.0 * c2) / 6.0;
    let c1 = y1 - y0 - c2 - c3;
    let mut out: Vec<FundamentalMatrix> = Vec::new();
    for a in real_cubic_roots([c0, c1, c2, c3]) {
        if let Some(f) = denormalize_f(f1 * a + f2 * (1.0 - a), &n) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(VerifyError::Degenerate("no real solution"));
    }
    Ok(out)
}

/// Normalized eight-point least squares over eight or more correspondences.
pub fn estimate_fundamental_lsq(pts: &[PointPair]) -> Result<FundamentalMatrix, VerifyError> {
    if pts.len() < 8 {
        return Err(VerifyError::SampleSize { expected: 8, got: pts.len() });
    }
    let n = normalize(pts);
    let basis = right_singular(&epipolar_rows(&n.pts));
    denormalize_f(to_matrix(&basis[0].1), &n).ok_or(VerifyError::Degenerate("rank-deficient solution"))
}

/// Five-point subsets of a seven-point sample; every pair of indices is
/// missing from at least one, so five coplanar points always leave four
/// of them together in some subset.
const SUBSETS: [[usize; 5]; 3] = [[0, 1, 2, 3, 4], [2, 3, 4, 5, 6], [0, 1, 4, 5, 6]];

/// Triples for homographies compatible with the sample's F; five coplanar
/// points among seven always contain one of them.
const TRIPLES: [[usize; 3]; 5] = [[0, 1, 2], [3, 4, 5], [0, 1, 6], [3, 4, 6], [2, 5, 6]];

/// Homography through three correspondences that is compatible with `f`:
/// `H = [e']_x F - e' (M^-1 b)^T`, with `e'` the epipole in image 2.
pub fn homography_from_f_and_3pt(f: &FundamentalMatrix, pts: &[PointPair]) -> Result<Homography, VerifyError> {
    if pts.len() != 3 {
        return Err(VerifyError::SampleSize { expected: 3, got: pts.len() });
    }
    let fm = f.matrix();
    let svd = fm.transpose().svd(false, true);
    let v_t = svd.v_t.ok_or(VerifyError::Degenerate("epipole"))?;
    let e = v_t.row(svd.singular_values.imin()).transpose();
    let a = cross_matrix(&e) * fm;
    let mut m = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (i, (u, v)) in pts.iter().enumerate() {
        let (x, xp) = (u.homogeneous(), v.homogeneous());
        let c = xp.cross(&e);
        let denom = c.norm_squared();
        if denom < 1e-18 {
            return Err(VerifyError::Degenerate("point at epipole"));
        }
        b[i] = xp.cross(&(a * x)).dot(&c) / denom;
        m.set_row(i, &x.transpose());
    }
    let w = m.try_inverse().ok_or(VerifyError::Degenerate("collinear triple"))? * b;
    Homography::new(a - e * w.transpose()).map_err(|_| VerifyError::Degenerate("singular homography"))
}

fn plane_support(h: &Homography, sample: &[PointPair], threshold: f64) -> Vec<PointPair> {
    sample
        .iter()
        .filter(|(u, v)| sym_reprojection_error(h, u, v).is_ok_and(|e| e < threshold))
        .copied()
        .collect()
}

/// Tests whether at least five of the seven sample points are explained by
/// one homography, trying every four-point fit within the canonical
/// five-point subsets and, given the sample's F, the F-compatible
/// three-point fits. On success returns the homography refit on all
/// sample points it explains.
pub fn check_sample_h_degeneracy(sample: &[PointPair], f: Option<&FundamentalMatrix>, threshold: f64) -> Option<Homography> {
    if sample.len() != 7 {
        return None;
    }
    let refit = |h: Homography| {
        let support = plane_support(&h, sample, threshold);
        (support.len() >= 5).then(|| estimate_homography_lsq(&support).unwrap_or(h))
    };
    if let Some(f) = f {
        for t in TRIPLES {
            let triple: Vec<PointPair> = t.iter().map(|&i| sample[i]).collect();
            if let Some(h) = homography_from_f_and_3pt(f, &triple).ok().and_then(refit) {
                return Some(h);
            }
        }
    }
    for subset in SUBSETS {
        for skip in 0..5 {
            let quad: Vec<PointPair> = subset.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &i)| sample[i]).collect();
            if let Some(h) = estimate_homography_4pt(&quad).ok().and_then(refit) {
                return Some(h);
            }
        }
    }
    None
}

/// Fundamental matrix from a plane homography and two off-plane
/// correspondences: the epipole is where the parallax lines `Hu x v` meet,
/// and `F = [e']_x H`.
pub fn plane_and_parallax(h: &Homography, p1: &PointPair, p2: &PointPair) -> Result<FundamentalMatrix, VerifyError> {
    let line = |(u, v): &PointPair| -> Vector3<f64> { (h.matrix() * u.homogeneous()).cross(&v.homogeneous()) };
    let (l1, l2) = (line(p1), line(p2));
    let e = l1.cross(&l2);
    if e.norm() <= 1e-12 * l1.norm() * l2.norm() {
        return Err(VerifyError::Degenerate("parallel parallax"));
    }
    FundamentalMatrix::new(cross_matrix(&e) * h.matrix()).map_err(|_| VerifyError::Degenerate("rank-deficient solution"))
}
