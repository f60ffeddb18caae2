//! Side-by-side rendering of verified correspondences.

use image::{Rgb, RgbImage};
use wxbs_core::imgproc::io::to_luma8;
use wxbs_core::{Correspondence, DescriptorKind, DetectorKind, GrayImage};

fn color(c: &Correspondence) -> Rgb<u8> {
    match (c.channel.detector, c.channel.descriptor) {
        (DetectorKind::Dog, DescriptorKind::HalfRootSift) => Rgb([255, 140, 0]),
        (DetectorKind::Hessian, DescriptorKind::HalfRootSift) => Rgb([220, 40, 200]),
        (DetectorKind::Hessian, _) => Rgb([40, 120, 255]),
        _ => Rgb([30, 200, 60]),
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((x0 + t * (x1 - x0)).round(), (y0 + t * (y1 - y0)).round());
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

/// Image 1 on the left, image 2 on the right, one line per correspondence
/// colored by channel.
pub fn side_by_side(img1: &GrayImage, img2: &GrayImage, tcs: &[Correspondence]) -> RgbImage {
    let (w1, w2) = (img1.width() as u32, img2.width() as u32);
    let h = img1.height().max(img2.height()) as u32;
    let mut canvas = RgbImage::new(w1 + w2, h);
    for (img, dx) in [(to_luma8(img1), 0), (to_luma8(img2), w1)] {
        for (x, y, p) in img.enumerate_pixels() {
            canvas.put_pixel(x + dx, y, Rgb([p[0], p[0], p[0]]));
        }
    }
    for c in tcs {
        let (u, v) = c.points();
        draw_line(&mut canvas, (u.x, u.y), (v.x + w1 as f64, v.y), color(c));
    }
    canvas
}
