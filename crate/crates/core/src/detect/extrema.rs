use nalgebra::{Matrix3, Vector3};

use super::{DetectorConfig, DetectorKind, Keypoint};
use crate::imgproc::{GaussianPyramid, Octave};

pub(super) struct Candidate {
    /// Response at the integer extremum, before refinement.
    pub raw: f64,
    pub keypoint: Keypoint,
}

impl Candidate {
    /// Half-threshold prefilter on the raw value, full threshold on the
    /// refined one. Monotone in `t`.
    pub fn passes(&self, t: f64) -> bool {
        self.raw.abs() >= 0.5 * t && self.keypoint.response.abs() >= t
    }
}

struct Layers {
    w: usize,
    h: usize,
    data: Vec<Vec<f64>>,
}

impl Layers {
    #[inline]
    fn at(&self, i: usize, x: usize, y: usize) -> f64 {
        self.data[i][y * self.w + x]
    }
}

/// Layer `i` is associated with the blur of pyramid level `i`.
fn response_layers(octave: &Octave, kind: DetectorKind, n: usize) -> Layers {
    let w = octave.levels[0].image.width();
    let h = octave.levels[0].image.height();
    let data = (0..n)
        .map(|i| match kind {
            DetectorKind::Dog => {
                let a = octave.levels[i].image.data();
                let b = octave.levels[i + 1].image.data();
                b.iter().zip(a).map(|(p, q)| p - q).collect()
            }
            DetectorKind::Hessian => {
                let s = octave.level_sigma(i);
                hessian_response(octave.levels[i].image.data(), w, h, s.powi(4))
            }
        })
        .collect();
    Layers { w, h, data }
}

/// `norm * (Lxx Lyy - Lxy^2)`; zero on the one-pixel border.
fn hessian_response(l: &[f64], w: usize, h: usize, norm: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let c = y * w + x;
            let lxx = l[c + 1] - 2.0 * l[c] + l[c - 1];
            let lyy = l[c + w] - 2.0 * l[c] + l[c - w];
            let lxy = 0.25 * (l[c + w + 1] - l[c + w - 1] - l[c - w + 1] + l[c - w - 1]);
            out[c] = norm * (lxx * lyy - lxy * lxy);
        }
    }
    out
}

fn is_extremum(layers: &Layers, i: usize, x: usize, y: usize, v: f64, allow_minima: bool) -> bool {
    let is_max = v > 0.0;
    if !is_max && !allow_minima {
        return false;
    }
    for di in 0..3 {
        let layer = &layers.data[i + di - 1];
        for dy in 0..3 {
            let row = (y + dy - 1) * layers.w;
            for dx in 0..3 {
                if di == 1 && dy == 1 && dx == 1 {
                    continue;
                }
                let n = layer[row + x + dx - 1];
                if (is_max && n >= v) || (!is_max && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

fn gradient_hessian(l: &Layers, i: usize, x: usize, y: usize) -> (Vector3<f64>, Matrix3<f64>) {
    let v = l.at(i, x, y);
    let dx = 0.5 * (l.at(i, x + 1, y) - l.at(i, x - 1, y));
    let dy = 0.5 * (l.at(i, x, y + 1) - l.at(i, x, y - 1));
    let ds = 0.5 * (l.at(i + 1, x, y) - l.at(i - 1, x, y));
    let dxx = l.at(i, x + 1, y) + l.at(i, x - 1, y) - 2.0 * v;
    let dyy = l.at(i, x, y + 1) + l.at(i, x, y - 1) - 2.0 * v;
    let dss = l.at(i + 1, x, y) + l.at(i - 1, x, y) - 2.0 * v;
    let dxy = 0.25 * (l.at(i, x + 1, y + 1) - l.at(i, x - 1, y + 1) - l.at(i, x + 1, y - 1) + l.at(i, x - 1, y - 1));
    let dxs = 0.25 * (l.at(i + 1, x + 1, y) - l.at(i + 1, x - 1, y) - l.at(i - 1, x + 1, y) + l.at(i - 1, x - 1, y));
    let dys = 0.25 * (l.at(i + 1, x, y + 1) - l.at(i + 1, x, y - 1) - l.at(i - 1, x, y + 1) + l.at(i - 1, x, y - 1));
    (Vector3::new(dx, dy, ds), Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss))
}

const MAX_REFINE_STEPS: usize = 5;

struct Refined {
    x: usize,
    y: usize,
    i: usize,
    offset: Vector3<f64>,
    value: f64,
}

/// Quadratic fit in `(x, y, level)`, moving to the neighbouring sample while
/// the offset exceeds half a sample along any axis.
fn refine(l: &Layers, s: usize, border: usize, mut x: usize, mut y: usize, mut i: usize) -> Option<Refined> {
    for _ in 0..MAX_REFINE_STEPS {
        let (g, hess) = gradient_hessian(l, i, x, y);
        let offset = -(hess.try_inverse()? * g);
        if !offset.iter().all(|v| v.is_finite()) {
            return None;
        }
        if offset.iter().all(|v| v.abs() < 0.5) {
            let value = l.at(i, x, y) + 0.5 * g.dot(&offset);
            return Some(Refined { x, y, i, offset, value });
        }
        let nx = x as i64 + offset.x.round() as i64;
        let ny = y as i64 + offset.y.round() as i64;
        let ni = i as i64 + offset.z.round() as i64;
        if nx < border as i64
            || ny < border as i64
            || nx >= (l.w - border) as i64
            || ny >= (l.h - border) as i64
            || ni < 1
            || ni > s as i64
        {
            return None;
        }
        (x, y, i) = (nx as usize, ny as usize, ni as usize);
    }
    None
}

fn passes_edge_test(l: &Layers, i: usize, x: usize, y: usize, r: f64) -> bool {
    let v = l.at(i, x, y);
    let dxx = l.at(i, x + 1, y) + l.at(i, x - 1, y) - 2.0 * v;
    let dyy = l.at(i, x, y + 1) + l.at(i, x, y - 1) - 2.0 * v;
    let dxy = 0.25 * (l.at(i, x + 1, y + 1) - l.at(i, x - 1, y + 1) - l.at(i, x + 1, y - 1) + l.at(i, x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * r < (r + 1.0) * (r + 1.0) * det
}

/// All refined extrema whose raw response reaches `0.5 * threshold`.
pub(super) fn candidates(pyr: &GaussianPyramid, cfg: &DetectorConfig, kind: DetectorKind, threshold: f64) -> Vec<Candidate> {
    let s = pyr.params.scales_per_octave.max(1);
    let sigma0 = pyr.params.initial_sigma;
    let border = cfg.border.max(1);
    let prefilter = 0.5 * threshold;
    let mut out = Vec::new();
    for (o, octave) in pyr.octaves.iter().enumerate() {
        let layers = response_layers(octave, kind, s + 2);
        if layers.w <= 2 * border || layers.h <= 2 * border {
            continue;
        }
        for i in 1..=s {
            for y in border..layers.h - border {
                for x in border..layers.w - border {
                    let v = layers.at(i, x, y);
                    if v.abs() < prefilter || !is_extremum(&layers, i, x, y, v, kind == DetectorKind::Dog) {
                        continue;
                    }
                    let Some(r) = refine(&layers, s, border, x, y, i) else { continue };
                    if kind == DetectorKind::Hessian && r.value <= 0.0 {
                        continue;
                    }
                    if kind == DetectorKind::Dog && !passes_edge_test(&layers, r.i, r.x, r.y, cfg.edge_ratio) {
                        continue;
                    }
                    let level = r.i as f64 + r.offset.z;
                    out.push(Candidate {
                        raw: v,
                        keypoint: Keypoint {
                            x: (r.x as f64 + r.offset.x) * octave.step,
                            y: (r.y as f64 + r.offset.y) * octave.step,
                            sigma: sigma0 * 2f64.powf(level / s as f64) * octave.step,
                            response: r.value,
                            detector: kind,
                            octave: o,
                            level,
                        },
                    });
                }
            }
        }
    }
    out
}
