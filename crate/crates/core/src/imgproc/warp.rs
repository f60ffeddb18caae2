use nalgebra::{Matrix2, Matrix3, Vector2};

use super::{gaussian_blur_xy, GrayImage, ImageError};
use crate::geometry::{affine_from_parts, affine_linear, check_affine};

/// Anti-alias blur for an axis downscaled by `scale`.
fn anti_alias_sigma(scale: f64) -> f64 {
    0.8 * (1.0 / (scale * scale) - 1.0).max(0.0).sqrt()
}

/// Inverse-mapped bilinear warp without anti-aliasing. `a` maps source
/// coordinates to output coordinates; samples falling outside the source
/// are 0.
pub fn warp_bilinear(
    img: &GrayImage,
    a: &Matrix3<f64>,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage, ImageError> {
    check_affine(a)?;
    let inv = a.try_inverse().ok_or(ImageError::Singular)?;
    if img.is_empty() {
        return Ok(GrayImage::filled(out_w, out_h, 0.0));
    }
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let yf = y as f64;
        let bx = inv[(0, 1)] * yf + inv[(0, 2)];
        let by = inv[(1, 1)] * yf + inv[(1, 2)];
        for x in 0..out_w {
            let xf = x as f64;
            let sx = inv[(0, 0)] * xf + bx;
            let sy = inv[(1, 0)] * xf + by;
            out.push(img.sample_bilinear(sx, sy).unwrap_or(0.0));
        }
    }
    GrayImage::new(out_w, out_h, out)
}

/// Affine warp with anti-aliasing.
///
/// When the linear part `U S V^T` shrinks along some direction, the source is
/// first rotated by `V^T` so the shrinking directions become image axes,
/// blurred per axis with `0.8 * sqrt(1/s^2 - 1)`, and then warped by the
/// remaining transform.
pub fn warp_affine(
    img: &GrayImage,
    a: &Matrix3<f64>,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage, ImageError> {
    check_affine(a)?;
    let lin = affine_linear(a);
    if lin.determinant().abs() < 1e-12 {
        return Err(ImageError::Singular);
    }
    let svd = lin.svd(true, true);
    let (v_t, s) = match svd.v_t {
        Some(v_t) => (v_t, svd.singular_values),
        None => return Err(ImageError::Singular),
    };
    if s.min() >= 1.0 - 1e-9 {
        return warp_bilinear(img, a, out_w, out_h);
    }
    let (sx, sy) = (anti_alias_sigma(s[0]), anti_alias_sigma(s[1]));

    // Shrinking directions already axis-aligned (possibly swapped).
    if v_t[(0, 1)].abs() < 1e-12 && v_t[(1, 0)].abs() < 1e-12 {
        let blurred = gaussian_blur_xy(img, sx, sy);
        return warp_bilinear(&blurred, a, out_w, out_h);
    }
    if v_t[(0, 0)].abs() < 1e-12 && v_t[(1, 1)].abs() < 1e-12 {
        let blurred = gaussian_blur_xy(img, sy, sx);
        return warp_bilinear(&blurred, a, out_w, out_h);
    }

    let (rot, rw, rh) = fit_to_bbox(&v_t, img.width(), img.height());
    let rotated = warp_bilinear(img, &rot, rw, rh)?;
    let blurred = gaussian_blur_xy(&rotated, sx, sy);
    let rest = a * rot.try_inverse().ok_or(ImageError::Singular)?;
    warp_bilinear(&blurred, &rest, out_w, out_h)
}

/// Affine map `lin` followed by the translation that moves the transformed
/// image corners to a bounding box at the origin.
pub fn fit_to_bbox(lin: &Matrix2<f64>, w: usize, h: usize) -> (Matrix3<f64>, usize, usize) {
    let (xmax, ymax) = ((w.max(1) - 1) as f64, (h.max(1) - 1) as f64);
    let corners = [
        Vector2::new(0.0, 0.0),
        Vector2::new(xmax, 0.0),
        Vector2::new(0.0, ymax),
        Vector2::new(xmax, ymax),
    ];
    let mapped: Vec<Vector2<f64>> = corners.iter().map(|c| lin * c).collect();
    let minx = mapped.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let miny = mapped.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let maxx = mapped.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let maxy = mapped.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let a = affine_from_parts(lin, Vector2::new(-minx, -miny));
    let out_w = ((maxx - minx) - 1e-9).ceil().max(0.0) as usize + 1;
    let out_h = ((maxy - miny) - 1e-9).ceil().max(0.0) as usize + 1;
    (a, out_w, out_h)
}
