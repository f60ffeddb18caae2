//! Homogeneous two-view geometry.
//!
//! Points, local affine frames (LAFs), homographies and rank-2 fundamental
//! matrices, together with the residuals used for verification and
//! evaluation. Both residuals are sums of unsquared pixel distances so a
//! threshold always reads in pixels.
//!
//! Epipolar convention: for a correspondence `u <-> v` (image 1, image 2),
//! `v^T F u = 0`, so `F u` is the epipolar line of `u` in image 2.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Guard for perspective division.
pub const HOMOGENEOUS_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at epipole")]
    PointAtEpipole,
    #[error("point at infinity")]
    PointAtInfinity,
    #[error("singular matrix")]
    Singular,
    #[error("matrix is not affine (last row must be 0 0 1)")]
    NotAffine,
    #[error("invalid local affine frame: {0}")]
    InvalidLaf(&'static str),
    #[error("non-finite value")]
    NonFinite,
    #[error("matrix text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Perspective division of a homogeneous 3-vector.
    pub fn from_homogeneous(h: &Vector3<f64>) -> Result<Self, GeometryError> {
        if h.z.abs() < HOMOGENEOUS_EPS {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Self::new(h.x / h.z, h.y / h.z))
    }
}

/// Local affine frame: a center plus a 2x2 shape whose columns are the two
/// frame axes in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laf {
    pub center: Point2,
    pub shape: Matrix2<f64>,
}

#[derive(Serialize, Deserialize)]
struct LafRepr {
    center: Point2,
    /// Row-major.
    shape: [[f64; 2]; 2],
}

impl Serialize for Laf {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let a = &self.shape;
        LafRepr { center: self.center, shape: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]] }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Laf {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = LafRepr::deserialize(deserializer)?;
        let [[a, b], [c, d]] = r.shape;
        Laf::new(r.center, Matrix2::new(a, b, c, d)).map_err(serde::de::Error::custom)
    }
}

impl Laf {
    pub fn new(center: Point2, shape: Matrix2<f64>) -> Result<Self, GeometryError> {
        if !center.is_finite() || shape.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidLaf("non-finite entry"));
        }
        if shape.determinant() <= 0.0 {
            return Err(GeometryError::InvalidLaf("shape determinant must be positive"));
        }
        Ok(Self { center, shape })
    }

    /// Similarity frame `scale * R(angle)` at `center`.
    pub fn similarity(center: Point2, scale: f64, angle: f64) -> Result<Self, GeometryError> {
        let (s, c) = angle.sin_cos();
        Self::new(center, Matrix2::new(c, -s, s, c) * scale)
    }

    /// Geometric mean of the axis lengths.
    pub fn scale(&self) -> f64 {
        self.shape.determinant().sqrt()
    }
}

/// The center and the endpoints of the two frame axes.
pub fn laf_to_point_triple(l: &Laf) -> (Point2, Point2, Point2) {
    let c = l.center.to_vector();
    (
        l.center,
        Point2::from_vector(c + l.shape.column(0)),
        Point2::from_vector(c + l.shape.column(1)),
    )
}

/// Rejects matrices whose last row is not `(0, 0, 1)`.
pub fn check_affine(a: &Matrix3<f64>) -> Result<(), GeometryError> {
    let tol = 1e-12;
    if a[(2, 0)].abs() > tol || a[(2, 1)].abs() > tol || (a[(2, 2)] - 1.0).abs() > tol {
        return Err(GeometryError::NotAffine);
    }
    Ok(())
}

/// The 2x2 linear part of an affine matrix.
pub fn affine_linear(a: &Matrix3<f64>) -> Matrix2<f64> {
    a.fixed_view::<2, 2>(0, 0).into_owned()
}

pub fn affine_apply(a: &Matrix3<f64>, p: &Point2) -> Point2 {
    Point2::new(
        a[(0, 0)] * p.x + a[(0, 1)] * p.y + a[(0, 2)],
        a[(1, 0)] * p.x + a[(1, 1)] * p.y + a[(1, 2)],
    )
}

/// Maps a LAF through an affine transform: the center through `a`, the
/// shape left-multiplied by its linear part.
pub fn transform_laf(a: &Matrix3<f64>, l: &Laf) -> Result<Laf, GeometryError> {
    check_affine(a)?;
    Laf::new(affine_apply(a, &l.center), affine_linear(a) * l.shape)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut m = m;
        if m[(2, 2)].abs() > HOMOGENEOUS_EPS {
            m /= m[(2, 2)];
        }
        let scale = m.norm();
        if scale == 0.0 || m.determinant().abs() <= 1e-14 * scale.powi(3) {
            return Err(GeometryError::Singular);
        }
        let inverse = m.try_inverse().ok_or(GeometryError::Singular)?;
        Ok(Self { matrix: m, inverse })
    }

    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity(), inverse: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    /// Swaps the stored pair, so `h.inverse().inverse() == h` exactly and
    /// residuals under `h` and its inverse agree bit for bit.
    pub fn inverse(&self) -> Self {
        Self { matrix: self.inverse, inverse: self.matrix }
    }

    pub fn transfer(&self, p: &Point2) -> Result<Point2, GeometryError> {
        Point2::from_homogeneous(&(self.matrix * p.homogeneous()))
    }

    pub fn transfer_back(&self, p: &Point2) -> Result<Point2, GeometryError> {
        Point2::from_homogeneous(&(self.inverse * p.homogeneous()))
    }

    /// Jacobian of the projective map at `p`.
    pub fn jacobian(&self, p: &Point2) -> Result<Matrix2<f64>, GeometryError> {
        let h = &self.matrix;
        let w = h[(2, 0)] * p.x + h[(2, 1)] * p.y + h[(2, 2)];
        if w.abs() < HOMOGENEOUS_EPS {
            return Err(GeometryError::PointAtInfinity);
        }
        let q = self.transfer(p)?;
        Ok(Matrix2::new(
            h[(0, 0)] - q.x * h[(2, 0)],
            h[(0, 1)] - q.x * h[(2, 1)],
            h[(1, 0)] - q.y * h[(2, 0)],
            h[(1, 1)] - q.y * h[(2, 1)],
        ) / w)
    }
}

/// Relative singular value below which a matrix counts as rank deficient.
const RANK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    matrix: Matrix3<f64>,
}

impl FundamentalMatrix {
    /// Projects onto the nearest rank-2 matrix (Frobenius norm) and
    /// normalizes to unit Frobenius norm.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(GeometryError::Singular);
        }
        let m = m / norm;
        let values = m.singular_values();
        let (smallest, largest) = (values.min(), values.max());
        // already rank 2 to working precision: reprojecting a badly scaled
        // pixel-space matrix would only add rounding error
        if smallest <= RANK_EPS * largest {
            if values.iter().filter(|&&v| v > RANK_EPS * largest).count() < 2 {
                return Err(GeometryError::Singular);
            }
            return Ok(Self { matrix: m });
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(GeometryError::Singular),
        };
        let mut s = svd.singular_values;
        let i = s.imin();
        s[i] = 0.0;
        if s.iter().filter(|&&v| v > 0.0).count() < 2 {
            return Err(GeometryError::Singular);
        }
        let f = u * Matrix3::from_diagonal(&s) * v_t;
        let f = f / f.norm();
        Ok(Self { matrix: f })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn transpose(&self) -> Self {
        Self { matrix: self.matrix.transpose() }
    }

    /// Epipolar line of an image-1 point in image 2.
    pub fn epipolar_line(&self, u: &Point2) -> Vector3<f64> {
        self.matrix * u.homogeneous()
    }

    /// Epipolar line of an image-2 point in image 1.
    pub fn epipolar_line_back(&self, v: &Point2) -> Vector3<f64> {
        self.matrix.transpose() * v.homogeneous()
    }
}

// `scale` bounds the magnitude the line would have away from the epipole
// (F has unit norm, so it is the norm of the homogeneous point).
fn point_line_distance(line: &Vector3<f64>, p: &Point2, scale: f64) -> Result<f64, GeometryError> {
    let ab = line.x.hypot(line.y);
    if ab <= HOMOGENEOUS_EPS * scale {
        return Err(GeometryError::PointAtEpipole);
    }
    Ok((line.x * p.x + line.y * p.y + line.z).abs() / ab)
}

/// `d(v, F u) + d(u, F^T v)`: perpendicular point-to-epipolar-line
/// distances in both images.
pub fn sym_epipolar_distance(
    f: &FundamentalMatrix,
    u: &Point2,
    v: &Point2,
) -> Result<f64, GeometryError> {
    let forward = point_line_distance(&f.epipolar_line(u), v, u.homogeneous().norm())?;
    let backward = point_line_distance(&f.epipolar_line_back(v), u, v.homogeneous().norm())?;
    Ok(forward + backward)
}

/// `|v - H u| + |u - H^-1 v|` with perspective division.
pub fn sym_reprojection_error(
    h: &Homography,
    u: &Point2,
    v: &Point2,
) -> Result<f64, GeometryError> {
    let forward = h.transfer(u)?.distance(v);
    let backward = h.transfer_back(v)?.distance(u);
    Ok(forward + backward)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(alias = "H", alias = "hom", alias = "Homography")]
    Hom,
    #[serde(alias = "F", alias = "fund", alias = "Fundamental")]
    Fund,
}

impl ModelKind {
    pub fn minimal_sample_size(self) -> usize {
        match self {
            ModelKind::Hom => 4,
            ModelKind::Fund => 7,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Hom => "Hom",
            ModelKind::Fund => "Fund",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoViewModel {
    Homography(Homography),
    Fundamental(FundamentalMatrix),
}

impl TwoViewModel {
    pub fn from_parts(kind: ModelKind, m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Ok(match kind {
            ModelKind::Hom => TwoViewModel::Homography(Homography::new(m)?),
            ModelKind::Fund => TwoViewModel::Fundamental(FundamentalMatrix::new(m)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TwoViewModel::Homography(_) => ModelKind::Hom,
            TwoViewModel::Fundamental(_) => ModelKind::Fund,
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        match self {
            TwoViewModel::Homography(h) => h.matrix(),
            TwoViewModel::Fundamental(f) => f.matrix(),
        }
    }
}

/// Residual of a correspondence under either model kind, in pixels.
pub fn model_residual(m: &TwoViewModel, u: &Point2, v: &Point2) -> Result<f64, GeometryError> {
    match m {
        TwoViewModel::Homography(h) => sym_reprojection_error(h, u, v),
        TwoViewModel::Fundamental(f) => sym_epipolar_distance(f, u, v),
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    kind: ModelKind,
    matrix: [[f64; 3]; 3],
}

impl Serialize for TwoViewModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ModelRepr { kind: self.kind(), matrix: matrix_rows(self.matrix()) }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TwoViewModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = ModelRepr::deserialize(deserializer)?;
        TwoViewModel::from_parts(repr.kind, matrix_from_rows(&repr.matrix))
            .map_err(serde::de::Error::custom)
    }
}

pub fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut rows = [[0.0; 3]; 3];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    rows
}

pub fn matrix_from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

/// Writes a 3x3 matrix as three lines of three row-major values. Rust's
/// shortest round-trip float formatting keeps every bit.
pub fn format_matrix(m: &Matrix3<f64>) -> String {
    let mut out = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| format!("{:e}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses 9 whitespace-separated decimals in row-major order.
pub fn parse_matrix(text: &str) -> Result<Matrix3<f64>, GeometryError> {
    let values = text
        .split_whitespace()
        .map(f64::from_str)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| GeometryError::Parse(e.to_string()))?;
    if values.len() != 9 {
        return Err(GeometryError::Parse(format!("expected 9 values, found {}", values.len())));
    }
    Ok(Matrix3::from_row_slice(&values))
}

/// 2D rotation by `angle` radians.
pub fn rotation2(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Embeds a 2x2 linear map and a translation into a 3x3 affine matrix.
pub fn affine_from_parts(linear: &Matrix2<f64>, t: Vector2<f64>) -> Matrix3<f64> {
    Matrix3::new(
        linear[(0, 0)],
        linear[(0, 1)],
        t.x,
        linear[(1, 0)],
        linear[(1, 1)],
        t.y,
        0.0,
        0.0,
        1.0,
    )
}

/// Skew-symmetric cross-product matrix `[v]_x`.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rectified() -> FundamentalMatrix {
        FundamentalMatrix::new(Matrix3::new(0., 0., 0., 0., 0., -1., 0., 1., 0.)).unwrap()
    }

    fn random_f(rng: &mut ChaCha8Rng) -> FundamentalMatrix {
        FundamentalMatrix::new(Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_h(rng: &mut ChaCha8Rng) -> Homography {
        let m = Matrix3::new(
            1.0 + rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-0.3..0.3),
            1.0 + rng.gen_range(-0.3..0.3),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-1e-4..1e-4),
            rng.gen_range(-1e-4..1e-4),
            1.0,
        );
        Homography::new(m).unwrap()
    }

    // Builds both epipolar lines as explicit two-point lines and measures
    // the distance with the cross-product area formula.
    fn epipolar_oracle(f: &Matrix3<f64>, u: &Point2, v: &Point2) -> f64 {
        fn dist(line: Vector3<f64>, p: &Point2) -> f64 {
            let (a, b, c) = (line.x, line.y, line.z);
            let (p0, dir) = if b.abs() > a.abs() {
                (Vector2::new(0.0, -c / b), Vector2::new(1.0, -a / b))
            } else {
                (Vector2::new(-c / a, 0.0), Vector2::new(-b / a, 1.0))
            };
            let w = p.to_vector() - p0;
            (dir.x * w.y - dir.y * w.x).abs() / dir.norm()
        }
        let l2 = f * Vector3::new(u.x, u.y, 1.0);
        let l1 = f.transpose() * Vector3::new(v.x, v.y, 1.0);
        dist(l2, v) + dist(l1, u)
    }

    #[test]
    fn epipolar_distance_rectified() {
        let f = rectified();
        let d = sym_epipolar_distance(&f, &Point2::new(5., 3.), &Point2::new(9., 3.)).unwrap();
        assert!(d.abs() < 1e-12);
        let d = sym_epipolar_distance(&f, &Point2::new(5., 3.), &Point2::new(9., 5.)).unwrap();
        assert_relative_eq!(d, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn epipolar_distance_matches_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let f = random_f(&mut rng);
            let u = Point2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let v = Point2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let d = sym_epipolar_distance(&f, &u, &v).unwrap();
            assert_relative_eq!(d, epipolar_oracle(f.matrix(), &u, &v), epsilon = 1e-9, max_relative = 1e-9);
            let dt = sym_epipolar_distance(&f.transpose(), &v, &u).unwrap();
            assert_relative_eq!(d, dt, epsilon = 1e-9);
        }
    }

    #[test]
    fn point_at_epipole_is_an_error() {
        // Epipole of the rectified pair is at infinity along x; F u = 0 for u = (1,0,0)
        // is not a finite point, so use a matrix with a finite epipole instead.
        let e = Vector3::new(10.0, 20.0, 1.0);
        let f = FundamentalMatrix::new(cross_matrix(&e) * Matrix3::identity()).unwrap();
        let r = sym_epipolar_distance(&f, &Point2::new(10.0, 20.0), &Point2::new(3.0, 4.0));
        assert_eq!(r, Err(GeometryError::PointAtEpipole));
    }

    #[test]
    fn reprojection_error_examples() {
        let h = Homography::identity();
        let p = Point2::new(10., 20.);
        assert_eq!(sym_reprojection_error(&h, &p, &p).unwrap(), 0.0);
        let t = Homography::new(Matrix3::new(1., 0., 3., 0., 1., 0., 0., 0., 1.)).unwrap();
        let o = Point2::new(0., 0.);
        assert!(sym_reprojection_error(&t, &o, &Point2::new(3., 0.)).unwrap() < 1e-12);
        assert_relative_eq!(sym_reprojection_error(&t, &o, &o).unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn reprojection_error_matches_transfer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let h = random_h(&mut rng);
            let u = Point2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
            let v = Point2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
            let m = h.matrix();
            let hu = m * Vector3::new(u.x, u.y, 1.0);
            let inv = m.try_inverse().unwrap();
            let hv = inv * Vector3::new(v.x, v.y, 1.0);
            let oracle = ((hu.x / hu.z - v.x).powi(2) + (hu.y / hu.z - v.y).powi(2)).sqrt()
                + ((hv.x / hv.z - u.x).powi(2) + (hv.y / hv.z - u.y).powi(2)).sqrt();
            let e = sym_reprojection_error(&h, &u, &v).unwrap();
            assert_relative_eq!(e, oracle, epsilon = 1e-9, max_relative = 1e-9);
            let ei = sym_reprojection_error(&h.inverse(), &v, &u).unwrap();
            assert_relative_eq!(e, ei, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn point_at_infinity_is_an_error() {
        let h = Homography::new(Matrix3::new(1., 0., 0., 0., 1., 0., 1., 0., 1.)).unwrap();
        let r = sym_reprojection_error(&h, &Point2::new(-1.0, 5.0), &Point2::new(0.0, 0.0));
        assert_eq!(r, Err(GeometryError::PointAtInfinity));
    }

    #[test]
    fn residuals_are_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let raw = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let s = rng.gen_range(0.1..10.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            let u = Point2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let v = Point2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let f1 = FundamentalMatrix::new(raw).unwrap();
            let f2 = FundamentalMatrix::new(raw * s).unwrap();
            assert_relative_eq!(
                sym_epipolar_distance(&f1, &u, &v).unwrap(),
                sym_epipolar_distance(&f2, &u, &v).unwrap(),
                epsilon = 1e-9,
                max_relative = 1e-9
            );
            let h = random_h(&mut rng);
            let h2 = Homography::new(h.matrix() * s).unwrap();
            assert_relative_eq!(
                sym_reprojection_error(&h, &u, &v).unwrap(),
                sym_reprojection_error(&h2, &u, &v).unwrap(),
                epsilon = 1e-9,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn fundamental_has_rank_two_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let sv = f.matrix().singular_values();
            let (max, min) = (sv.max(), sv.min());
            assert!(min <= 1e-9 * max, "{sv:?}");
            assert_relative_eq!(f.matrix().norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn model_residual_dispatches() {
        let p = Point2::new(3.0, 4.0);
        let hom = TwoViewModel::Homography(Homography::identity());
        assert_eq!(model_residual(&hom, &p, &p).unwrap(), 0.0);
        let fund = TwoViewModel::Fundamental(rectified());
        assert!(model_residual(&fund, &p, &Point2::new(100.0, 4.0)).unwrap() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let h = random_h(&mut rng);
            let u = Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let v = Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            assert_eq!(
                model_residual(&TwoViewModel::Fundamental(f), &u, &v),
                sym_epipolar_distance(&f, &u, &v)
            );
            assert_eq!(
                model_residual(&TwoViewModel::Homography(h), &u, &v),
                sym_reprojection_error(&h, &u, &v)
            );
        }
    }

    #[test]
    fn laf_triples() {
        let l = Laf::new(Point2::new(0., 0.), Matrix2::identity()).unwrap();
        assert_eq!(
            laf_to_point_triple(&l),
            (Point2::new(0., 0.), Point2::new(1., 0.), Point2::new(0., 1.))
        );
        let l = Laf::new(Point2::new(5., 5.), Matrix2::identity() * 2.0).unwrap();
        assert_eq!(
            laf_to_point_triple(&l),
            (Point2::new(5., 5.), Point2::new(7., 5.), Point2::new(5., 7.))
        );
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let c = Point2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let a = Matrix2::new(2.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 2.0);
            let (p0, p1, p2) = laf_to_point_triple(&Laf::new(c, a).unwrap());
            assert_eq!(p0, c);
            assert_relative_eq!(p1.x, c.x + a[(0, 0)]);
            assert_relative_eq!(p1.y, c.y + a[(1, 0)]);
            assert_relative_eq!(p2.x, c.x + a[(0, 1)]);
            assert_relative_eq!(p2.y, c.y + a[(1, 1)]);
        }
    }

    fn random_affine(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        loop {
            let lin = Matrix2::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            if lin.determinant() > 0.1 {
                let t = Vector2::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
                return affine_from_parts(&lin, t);
            }
        }
    }

    #[test]
    fn transform_laf_examples() {
        let l = Laf::new(Point2::new(1., 0.), Matrix2::identity()).unwrap();
        assert_eq!(transform_laf(&Matrix3::identity(), &l).unwrap(), l);
        let r = affine_from_parts(&rotation2(std::f64::consts::FRAC_PI_2), Vector2::zeros());
        let out = transform_laf(&r, &l).unwrap();
        assert_relative_eq!(out.center.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(out.center.y, 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.shape, rotation2(std::f64::consts::FRAC_PI_2), epsilon = 1e-15);

        let mut bad = Matrix3::identity();
        bad[(2, 0)] = 0.1;
        assert_eq!(transform_laf(&bad, &l), Err(GeometryError::NotAffine));
    }

    #[test]
    fn transform_laf_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_affine(&mut rng);
            let b = random_affine(&mut rng);
            let l = Laf::similarity(
                Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.0..6.0),
            )
            .unwrap();
            let direct = transform_laf(&(a * b), &l).unwrap();
            let chained = transform_laf(&a, &transform_laf(&b, &l).unwrap()).unwrap();
            assert_relative_eq!(direct.center.x, chained.center.x, epsilon = 1e-9);
            assert_relative_eq!(direct.center.y, chained.center.y, epsilon = 1e-9);
            assert_relative_eq!(direct.shape, chained.shape, epsilon = 1e-9);

            // Triples commute with the transform.
            let (q0, q1, q2) = laf_to_point_triple(&transform_laf(&a, &l).unwrap());
            let (p0, p1, p2) = laf_to_point_triple(&l);
            for (q, p) in [(q0, p0), (q1, p1), (q2, p2)] {
                let ap = affine_apply(&a, &p);
                assert_relative_eq!(q.x, ap.x, epsilon = 1e-9);
                assert_relative_eq!(q.y, ap.y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn matrix_text_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Matrix3::from_fn(|_, _| rng.gen_range(-1e3..1e3) / 7.0);
        let parsed = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(parsed, m);
        assert!(parse_matrix("1 2 3").is_err());
        assert!(parse_matrix("1 2 3 4 5 6 7 8 x").is_err());
    }

    #[test]
    fn model_json_round_trips() {
        let f = TwoViewModel::Fundamental(rectified());
        let text = serde_json::to_string(&f).unwrap();
        let back: TwoViewModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.kind(), ModelKind::Fund);
        assert_relative_eq!(*back.matrix(), *f.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn laf_rejects_bad_shapes() {
        assert!(Laf::new(Point2::new(0., 0.), Matrix2::zeros()).is_err());
        assert!(Laf::new(Point2::new(0., 0.), Matrix2::new(1., 0., 0., -1.)).is_err());
        assert!(Laf::new(Point2::new(f64::NAN, 0.), Matrix2::identity()).is_err());
    }
}
