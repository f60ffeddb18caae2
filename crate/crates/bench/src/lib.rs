//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wxbs_core::synthetic::StereoRig;
use wxbs_core::Point2;

/// Unit-norm random vectors.
pub fn random_descriptors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// `inliers` noiseless rig correspondences followed by uniform outliers up
/// to `total`.
pub fn planted_f_points(inliers: usize, total: usize, seed: u64) -> Vec<(Point2, Point2)> {
    let rig = StereoRig::random(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = rig.random_correspondences(&mut rng, inliers, 3.0..20.0);
    while pts.len() < total {
        let u = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        let v = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        pts.push((u, v));
    }
    pts
}
