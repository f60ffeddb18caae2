use super::GrayImage;

/// L1-normalized sampled Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index (reflect-101: `... 2 1 | 0 1 2 ... n-1 | n-2 ...`).
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn convolve_rows(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as i64;
    let mut out = Vec::with_capacity(w * h);
    let mut padded = vec![0.0; w + 2 * r as usize];
    for y in 0..h {
        let row = img.row(y);
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect(i as i64 - r, w)];
        }
        for x in 0..w {
            let window = &padded[x..x + kernel.len()];
            out.push(window.iter().zip(kernel).map(|(a, b)| a * b).sum());
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

fn convolve_cols(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, &k) in kernel.iter().enumerate() {
            let src = img.row(reflect(y as i64 + j as i64 - r, h));
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    gaussian_blur_xy(img, sigma, sigma)
}

/// Axis-aligned anisotropic Gaussian blur; a zero sigma skips that axis.
pub fn gaussian_blur_xy(img: &GrayImage, sigma_x: f64, sigma_y: f64) -> GrayImage {
    let mut out = img.clone();
    if img.is_empty() {
        return out;
    }
    if sigma_x > 0.0 {
        out = convolve_rows(&out, &gaussian_kernel(sigma_x));
    }
    if sigma_y > 0.0 {
        out = convolve_cols(&out, &gaussian_kernel(sigma_y));
    }
    out
}
