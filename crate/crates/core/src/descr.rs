//! SIFT-family patch descriptors and the raw-pixel baseline.
//!
//! Histogram layout is `(cell_y * 4 + cell_x) * bins + orientation_bin` over
//! a 4x4 grid of cells. Full descriptors use 8 orientation bins over
//! `[0, 2pi)`; half descriptors fold gradients into 4 bins over `[0, pi)`.

use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{gradients, photometric_normalize, Patch, PATCH_SIZE};

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("expected a {expected:?} descriptor of length {len}, got {got:?} of length {got_len}")]
    WrongKind { expected: DescriptorKind, len: usize, got: DescriptorKind, got_len: usize },
    #[error("degenerate patch")]
    Degenerate,
    #[error("mixed descriptor kinds or lengths in one dump")]
    Mixed,
    #[error("malformed descriptor dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Sift,
    #[serde(alias = "rsift")]
    RootSift,
    HalfSift,
    #[serde(alias = "hrsift")]
    HalfRootSift,
    InvSift,
    #[serde(alias = "raw")]
    RawPixels,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 6] = [
        DescriptorKind::Sift,
        DescriptorKind::RootSift,
        DescriptorKind::HalfSift,
        DescriptorKind::HalfRootSift,
        DescriptorKind::InvSift,
        DescriptorKind::RawPixels,
    ];

    pub fn dim(self) -> usize {
        match self {
            DescriptorKind::Sift | DescriptorKind::RootSift | DescriptorKind::InvSift => 128,
            DescriptorKind::HalfSift | DescriptorKind::HalfRootSift => 64,
            DescriptorKind::RawPixels => PATCH_SIZE * PATCH_SIZE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Sift => "sift",
            DescriptorKind::RootSift => "rootsift",
            DescriptorKind::HalfSift => "halfsift",
            DescriptorKind::HalfRootSift => "halfrootsift",
            DescriptorKind::InvSift => "invsift",
            DescriptorKind::RawPixels => "rawpixels",
        }
    }
}

impl std::fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "rsift" => Ok(DescriptorKind::RootSift),
            "hrsift" => Ok(DescriptorKind::HalfRootSift),
            "raw" => Ok(DescriptorKind::RawPixels),
            _ => DescriptorKind::ALL
                .into_iter()
                .find(|k| k.name() == lower)
                .ok_or_else(|| format!("unknown descriptor '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: DescriptorKind,
    pub values: Vec<f64>,
    /// All-zero histogram from a gradient-free patch; the only case where
    /// the norm is not 1.
    #[serde(default)]
    pub degenerate: bool,
}

impl Descriptor {
    pub fn l2_distance(&self, other: &Descriptor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

const CELLS: usize = 4;
const FULL_BINS: usize = 8;
const HALF_BINS: usize = 4;
const CLAMP: f64 = 0.2;

/// Unnormalized SIFT histogram with trilinear interpolation over cells and
/// orientation bins, weighted by gradient magnitude and a Gaussian of
/// sigma = half the patch width.
pub fn sift_histogram(p: &Patch, half: bool) -> Vec<f64> {
    let bins = if half { HALF_BINS } else { FULL_BINS };
    let period = if half { std::f64::consts::PI } else { std::f64::consts::TAU };
    let (mag, ori) = gradients(&p.to_image());
    let n = PATCH_SIZE as f64;
    let cell = n / CELLS as f64;
    let center = (n - 1.0) / 2.0;
    let sigma = n / 2.0;
    let denom = 2.0 * sigma * sigma;
    let mut hist = vec![0.0; CELLS * CELLS * bins];

    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            let m = mag.get(x, y);
            if m == 0.0 {
                continue;
            }
            let (dx, dy) = (x as f64 - center, y as f64 - center);
            let w = m * (-(dx * dx + dy * dy) / denom).exp();

            let cx = (x as f64 + 0.5) / cell - 0.5;
            let cy = (y as f64 + 0.5) / cell - 0.5;
            let fo = ori.get(x, y).rem_euclid(period) / period * bins as f64;
            let (x0, y0, o0) = (cx.floor(), cy.floor(), fo.floor());
            let (fx, fy, fr) = (cx - x0, cy - y0, fo - o0);

            for (iy, wy) in [(y0 as i64, 1.0 - fy), (y0 as i64 + 1, fy)] {
                if iy < 0 || iy >= CELLS as i64 || wy == 0.0 {
                    continue;
                }
                for (ix, wx) in [(x0 as i64, 1.0 - fx), (x0 as i64 + 1, fx)] {
                    if ix < 0 || ix >= CELLS as i64 || wx == 0.0 {
                        continue;
                    }
                    let base = (iy as usize * CELLS + ix as usize) * bins;
                    for (io, wo) in [(o0 as usize, 1.0 - fr), (o0 as usize + 1, fr)] {
                        hist[base + io % bins] += w * wy * wx * wo;
                    }
                }
            }
        }
    }
    hist
}

fn l2_normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// L2-normalize, clamp at 0.2, L2-normalize again.
pub fn finalize_sift(kind: DescriptorKind, mut hist: Vec<f64>) -> Descriptor {
    if !l2_normalize(&mut hist) {
        return Descriptor { kind, values: hist, degenerate: true };
    }
    hist.iter_mut().for_each(|x| *x = x.min(CLAMP));
    l2_normalize(&mut hist);
    Descriptor { kind, values: hist, degenerate: false }
}

/// L1-normalize, then elementwise square root; the result has unit L2 norm.
pub fn finalize_root(kind: DescriptorKind, mut hist: Vec<f64>) -> Descriptor {
    let l1: f64 = hist.iter().map(|x| x.abs()).sum();
    if l1 <= 0.0 {
        return Descriptor { kind, values: hist, degenerate: true };
    }
    hist.iter_mut().for_each(|x| *x = (x.abs() / l1).sqrt());
    Descriptor { kind, values: hist, degenerate: false }
}

pub fn sift(p: &Patch) -> Descriptor {
    finalize_sift(DescriptorKind::Sift, sift_histogram(p, false))
}

pub fn root_sift(p: &Patch) -> Descriptor {
    finalize_root(DescriptorKind::RootSift, sift_histogram(p, false))
}

pub fn half_sift(p: &Patch) -> Descriptor {
    finalize_sift(DescriptorKind::HalfSift, sift_histogram(p, true))
}

pub fn half_root_sift(p: &Patch) -> Descriptor {
    finalize_root(DescriptorKind::HalfRootSift, sift_histogram(p, true))
}

/// Shifts every orientation group by four bins (a rotation of gradients by
/// pi), giving the SIFT descriptor of the intensity-inverted patch.
pub fn inv_sift_reorder(d: &Descriptor) -> Result<Descriptor, DescriptorError> {
    let ok_kind = matches!(d.kind, DescriptorKind::Sift | DescriptorKind::InvSift);
    if !ok_kind || d.values.len() != DescriptorKind::Sift.dim() {
        return Err(DescriptorError::WrongKind {
            expected: DescriptorKind::Sift,
            len: DescriptorKind::Sift.dim(),
            got: d.kind,
            got_len: d.values.len(),
        });
    }
    let mut values = vec![0.0; d.values.len()];
    for (i, v) in d.values.iter().enumerate() {
        let (cell, bin) = (i / FULL_BINS, i % FULL_BINS);
        values[cell * FULL_BINS + (bin + FULL_BINS / 2) % FULL_BINS] = *v;
    }
    let kind = if d.kind == DescriptorKind::Sift { DescriptorKind::InvSift } else { DescriptorKind::Sift };
    Ok(Descriptor { kind, values, degenerate: d.degenerate })
}

/// Photometrically normalized intensities, flattened and L2-normalized.
pub fn raw_pixels(p: &Patch) -> Result<Descriptor, DescriptorError> {
    let (_, std) = p.mean_std();
    if std < 1e-12 {
        return Err(DescriptorError::Degenerate);
    }
    let mut values = photometric_normalize(p).data().to_vec();
    if !l2_normalize(&mut values) {
        return Err(DescriptorError::Degenerate);
    }
    Ok(Descriptor { kind: DescriptorKind::RawPixels, values, degenerate: false })
}

/// Describes `p` as-is; callers normalize photometrically beforehand when
/// wanted. Gradient-free patches are an error for every kind.
pub fn describe(p: &Patch, kind: DescriptorKind) -> Result<Descriptor, DescriptorError> {
    let d = match kind {
        DescriptorKind::Sift => sift(p),
        DescriptorKind::RootSift => root_sift(p),
        DescriptorKind::HalfSift => half_sift(p),
        DescriptorKind::HalfRootSift => half_root_sift(p),
        DescriptorKind::InvSift => inv_sift_reorder(&sift(p))?,
        DescriptorKind::RawPixels => return raw_pixels(p),
    };
    if d.degenerate {
        return Err(DescriptorError::Degenerate);
    }
    Ok(d)
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    kind: DescriptorKind,
    dim: usize,
    count: usize,
}

/// One JSON header line `{"kind","dim","count"}`, then `count * dim`
/// little-endian f32 values.
pub fn write_descriptors_bin<W: Write>(mut out: W, descs: &[Descriptor]) -> Result<(), DescriptorError> {
    let kind = descs.first().map_or(DescriptorKind::Sift, |d| d.kind);
    let dim = descs.first().map_or(kind.dim(), |d| d.values.len());
    if descs.iter().any(|d| d.kind != kind || d.values.len() != dim) {
        return Err(DescriptorError::Mixed);
    }
    let header = serde_json::to_string(&DumpHeader { kind, dim, count: descs.len() })
        .map_err(|e| DescriptorError::Format(e.to_string()))?;
    writeln!(out, "{header}")?;
    for d in descs {
        for v in &d.values {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_descriptors_bin<R: BufRead>(mut input: R) -> Result<Vec<Descriptor>, DescriptorError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end()).map_err(|e| DescriptorError::Format(e.to_string()))?;
    let mut buf = [0u8; 4];
    let mut out = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let mut values = Vec::with_capacity(header.dim);
        for _ in 0..header.dim {
            input.read_exact(&mut buf)?;
            values.push(f32::from_le_bytes(buf) as f64);
        }
        let degenerate = values.iter().all(|v| *v == 0.0);
        out.push(Descriptor { kind: header.kind, values, degenerate });
    }
    Ok(out)
}

/// One row per descriptor: kind, then the values.
pub fn write_descriptors_csv<W: Write>(out: W, descs: &[Descriptor]) -> Result<(), DescriptorError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for d in descs {
        let mut row = vec![d.kind.name().to_string()];
        row.extend(d.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured_patch(seed: u64) -> Patch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(0.0..6.3), rng.gen_range(0.05..0.15)))
            .collect();
        Patch::from_fn(|x, y| {
            0.5 + waves.iter().map(|(a, b, c, d)| d * (a * x as f64 + b * y as f64 + c).sin()).sum::<f64>()
        })
    }

    #[test]
    fn constant_patch_is_degenerate() {
        let p = Patch::from_fn(|_, _| 0.4);
        let d = sift(&p);
        assert!(d.degenerate && d.values.iter().all(|v| *v == 0.0));
        assert!(matches!(describe(&p, DescriptorKind::RootSift), Err(DescriptorError::Degenerate)));
        assert!(matches!(raw_pixels(&p), Err(DescriptorError::Degenerate)));
    }

    #[test]
    fn ramp_mass_is_in_orientation_zero() {
        let p = Patch::from_fn(|x, _| x as f64 / 41.0);
        let hist = sift_histogram(&p, false);
        let total: f64 = hist.iter().sum();
        let zero: f64 = hist.iter().step_by(FULL_BINS).sum();
        assert!(zero / total > 0.95);
    }

    #[test]
    fn rotation_by_pi_changes_sift() {
        let p = textured_patch(1);
        let rotated = Patch::from_fn(|x, y| p.get(PATCH_SIZE - 1 - x, PATCH_SIZE - 1 - y));
        assert!(sift(&p).l2_distance(&sift(&rotated)) > 0.5);
    }

    #[test]
    fn root_sift_examples() {
        let mut one_hot = vec![0.0; 128];
        one_hot[17] = 3.5;
        let d = finalize_root(DescriptorKind::RootSift, one_hot);
        assert_eq!(d.values[17], 1.0);
        assert_eq!(d.values.iter().filter(|v| **v != 0.0).count(), 1);

        let mut h = vec![0.0; 128];
        h[0] = 9.0;
        h[1] = 16.0;
        let d = finalize_root(DescriptorKind::RootSift, h);
        assert!((d.values[0] - 0.6).abs() < 1e-15 && (d.values[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_norms() {
        for seed in 0..20 {
            let p = textured_patch(seed);
            for kind in DescriptorKind::ALL {
                let d = describe(&p, kind).unwrap();
                assert_eq!(d.values.len(), kind.dim());
                assert!((d.norm() - 1.0).abs() < 1e-9, "{kind}");
            }
        }
    }

    #[test]
    fn inv_sift_index_arithmetic() {
        let mut v = vec![0.0; 128];
        v[1] = 1.0;
        let d = Descriptor { kind: DescriptorKind::Sift, values: v, degenerate: false };
        let r = inv_sift_reorder(&d).unwrap();
        assert_eq!(r.values[5], 1.0);
        assert_eq!(inv_sift_reorder(&r).unwrap(), d);
        let half = half_sift(&textured_patch(3));
        assert!(inv_sift_reorder(&half).is_err());
    }

    #[test]
    fn half_descriptors_ignore_inversion() {
        let p = Patch::from_fn(|x, _| x as f64 / 41.0);
        let q = p.map(|v| 1.0 - v);
        assert!(half_sift(&p).l2_distance(&half_sift(&q)) < 1e-6);
        assert_eq!(half_sift(&p).values.len(), 64);
    }

    #[test]
    fn raw_pixels_distances() {
        let img = crate::synthetic::textured_scene(120, 120, 5);
        let crop = |ox: usize, oy: usize| Patch::from_fn(|x, y| img.get(ox + x, oy + y));
        let smooth = crate::imgproc::gaussian_blur(&img, 2.0);
        let scrop = |ox: usize, oy: usize| Patch::from_fn(|x, y| smooth.get(ox + x, oy + y));
        let a = raw_pixels(&scrop(30, 30)).unwrap();
        let b = raw_pixels(&scrop(31, 30)).unwrap();
        let c = raw_pixels(&scrop(70, 65)).unwrap();
        assert_eq!(a.l2_distance(&raw_pixels(&scrop(30, 30)).unwrap()), 0.0);
        assert!(a.l2_distance(&b) < 0.5 * a.l2_distance(&c));
        assert!((raw_pixels(&crop(10, 10)).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_and_csv_dumps() {
        let descs: Vec<Descriptor> = (0..3).map(|s| root_sift(&textured_patch(s))).collect();
        let mut buf = Vec::new();
        write_descriptors_bin(&mut buf, &descs).unwrap();
        let header_end = buf.iter().position(|b| *b == b'\n').unwrap();
        assert_eq!(buf.len() - header_end - 1, 3 * 128 * 4);
        let back = read_descriptors_bin(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&descs) {
            assert_eq!(a.kind, b.kind);
            assert!(a.l2_distance(b) < 1e-6);
        }
        let mixed = vec![descs[0].clone(), half_sift(&textured_patch(9))];
        assert!(matches!(write_descriptors_bin(Vec::new(), &mixed), Err(DescriptorError::Mixed)));

        let mut csv_buf = Vec::new();
        write_descriptors_csv(&mut csv_buf, &descs[..1]).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("rootsift,"));
        assert_eq!(text.trim_end().split(',').count(), 129);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DescriptorKind::ALL {
            assert_eq!(k.name().parse::<DescriptorKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<DescriptorKind>(&json).unwrap(), k);
        }
        assert_eq!("hrSIFT".parse::<DescriptorKind>().unwrap(), DescriptorKind::HalfRootSift);
    }
}
