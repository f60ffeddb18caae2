//! Procedural textured scenes for fixtures, demos and benchmarks.
//!
//! A scene is a smooth background overpainted with random polygons and
//! ellipses of random gray levels, then slightly blurred. The shapes are
//! irregular, so local structure is distinctive under rotation and
//! intensity inversion.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{cross_matrix, FundamentalMatrix, Homography, Point2};
use crate::imgproc::{gaussian_blur, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Shapes per 10 000 pixels.
    pub shape_density: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Fraction of shapes that are ellipses; the rest are polygons.
    pub ellipse_fraction: f64,
    pub blur: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self { shape_density: 30.0, min_radius: 2.0, max_radius: 30.0, ellipse_fraction: 0.3, blur: 0.7 }
    }
}

enum Shape {
    Polygon(Vec<(f64, f64)>),
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Polygon(v) => {
                let mut inside = false;
                let mut j = v.len() - 1;
                for i in 0..v.len() {
                    let (xi, yi) = v[i];
                    let (xj, yj) = v[j];
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
            Shape::Ellipse { cx, cy, a, b, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Polygon(v) => v.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            ),
            Shape::Ellipse { cx, cy, a, .. } => (cx - a, cy - a, cx + a, cy + a),
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng, w: f64, h: f64, p: &SceneParams) -> Shape {
    let cx = rng.gen_range(-0.05 * w..1.05 * w);
    let cy = rng.gen_range(-0.05 * h..1.05 * h);
    // log-uniform radius: many small shapes, few large ones
    let r = (rng.gen_range(p.min_radius.ln()..p.max_radius.ln())).exp();
    if rng.gen_bool(p.ellipse_fraction.clamp(0.0, 1.0)) {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let b = r * rng.gen_range(0.3..1.0);
        Shape::Ellipse { cx, cy, a: r, b, cos: angle.cos(), sin: angle.sin() }
    } else {
        let n = rng.gen_range(3..=6);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let vertices = angles
            .into_iter()
            .map(|t| {
                let rr = r * rng.gen_range(0.4..1.0);
                (cx + rr * t.cos(), cy + rr * t.sin())
            })
            .collect();
        Shape::Polygon(vertices)
    }
}

/// Renders a scene; identical arguments give identical images.
pub fn textured_scene_with(width: usize, height: usize, seed: u64, params: &SceneParams) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.gen_range(0.005..0.02);
            let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (freq * dir.cos(), freq * dir.sin(), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.03..0.08))
        })
        .collect();
    let mut img = GrayImage::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        0.5 + waves.iter().map(|&(fx, fy, ph, amp)| amp * (x * fx + y * fy + ph).sin()).sum::<f64>()
    });

    // 2x2 supersampling per pixel for partial coverage at shape edges
    const OFFSETS: [(f64, f64); 4] = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];
    let count = (params.shape_density * w * h / 10_000.0).round() as usize;
    for _ in 0..count {
        let shape = random_shape(&mut rng, w, h, params);
        let level = rng.gen_range(0.05..0.95);
        let (x0, y0, x1, y1) = shape.bounds();
        let xs = x0.floor().max(0.0) as usize;
        let ys = y0.floor().max(0.0) as usize;
        let xe = (x1.ceil().max(-1.0) as i64).min(width as i64 - 1);
        let ye = (y1.ceil().max(-1.0) as i64).min(height as i64 - 1);
        if xe < 0 || ye < 0 {
            continue;
        }
        for y in ys..=ye as usize {
            for x in xs..=xe as usize {
                let hits = OFFSETS
                    .iter()
                    .filter(|(dx, dy)| shape.contains(x as f64 + dx, y as f64 + dy))
                    .count();
                if hits > 0 {
                    let c = hits as f64 / 4.0;
                    let old = img.get(x, y);
                    img.set(x, y, old * (1.0 - c) + level * c);
                }
            }
        }
    }
    if params.blur > 0.0 {
        img = gaussian_blur(&img, params.blur);
    }
    img.map(|v| v.clamp(0.0, 1.0))
}

pub fn textured_scene(width: usize, height: usize, seed: u64) -> GrayImage {
    textured_scene_with(width, height, seed, &SceneParams::default())
}

/// Isotropic Gaussian blob of height `amplitude` on a constant background.
pub fn gaussian_blob(width: usize, height: usize, cx: f64, cy: f64, sigma: f64, amplitude: f64, background: f64) -> GrayImage {
    let denom = 2.0 * sigma * sigma;
    GrayImage::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        background + amplitude * (-(dx * dx + dy * dy) / denom).exp()
    })
}

/// Two pinhole cameras: camera 1 is `K [I | 0]`, camera 2 is `K [R | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub width: f64,
    pub height: f64,
}

impl StereoRig {
    /// A 640x480 rig with focal length 600, a baseline of about one unit
    /// and a few degrees of relative rotation.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = |rng: &mut ChaCha8Rng| rng.gen_range(-0.1..0.1);
        let r = Rotation3::from_euler_angles(angle(&mut rng), angle(&mut rng), angle(&mut rng)).into_inner();
        let t = Vector3::new(rng.gen_range(0.7..1.2), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
        let k = Matrix3::new(600.0, 0.0, 320.0, 0.0, 600.0, 240.0, 0.0, 0.0, 1.0);
        Self { k, r, t, width: 640.0, height: 480.0 }
    }

    fn k_inv(&self) -> Matrix3<f64> {
        self.k.try_inverse().expect("calibration is invertible")
    }

    pub fn fundamental(&self) -> FundamentalMatrix {
        let ki = self.k_inv();
        FundamentalMatrix::new(ki.transpose() * cross_matrix(&self.t) * self.r * ki).expect("rig has a baseline")
    }

    /// Homography induced by the plane `n . X = d` in camera-1 coordinates.
    pub fn plane_homography(&self, n: &Vector3<f64>, d: f64) -> Homography {
        Homography::new(self.k * (self.r + self.t * n.transpose() / d) * self.k_inv()).expect("plane off the camera centers")
    }

    /// Projections of a camera-1 point into both images, if it lies in
    /// front of both cameras.
    pub fn project(&self, x: &Vector3<f64>) -> Option<(Point2, Point2)> {
        let x2 = self.r * x + self.t;
        if x.z <= 1e-6 || x2.z <= 1e-6 {
            return None;
        }
        let p1 = self.k * x;
        let p2 = self.k * x2;
        Some((Point2::new(p1.x / p1.z, p1.y / p1.z), Point2::new(p2.x / p2.z, p2.y / p2.z)))
    }

    fn in_view(&self, p: &Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    fn sample_ray(&self, rng: &mut impl Rng) -> Vector3<f64> {
        let u = Vector3::new(rng.gen_range(0.0..self.width), rng.gen_range(0.0..self.height), 1.0);
        self.k_inv() * u
    }

    /// Correspondences of random scene points at depths in `depth`, visible
    /// in both images.
    pub fn random_correspondences(&self, rng: &mut impl Rng, n: usize, depth: std::ops::Range<f64>) -> Vec<(Point2, Point2)> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = self.sample_ray(rng) * rng.gen_range(depth.clone());
            if let Some((u, v)) = self.project(&x).filter(|(_, v)| self.in_view(v)) {
                out.push((u, v));
            }
        }
        out
    }

    /// Correspondences of random points on the plane `n . X = d`.
    pub fn plane_correspondences(&self, rng: &mut impl Rng, count: usize, n: &Vector3<f64>, d: f64) -> Vec<(Point2, Point2)> {
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let ray = self.sample_ray(rng);
            let denom = n.dot(&ray);
            if denom.abs() < 1e-9 {
                continue;
            }
            if let Some((u, v)) = self.project(&(ray * (d / denom))).filter(|(_, v)| self.in_view(v)) {
                out.push((u, v));
            }
        }
        out
    }
}
