//! PNG and PGM/PPM input, PNG output. Intensities map to `[0, 1]` by /255.

use std::path::Path;

use super::{ColorImage, GrayImage, ImageError};

pub fn load_color(path: &Path) -> Result<ColorImage, ImageError> {
    let img = image::open(path).map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    Ok(ColorImage { width: w as usize, height: h as usize, data })
}

/// Loads any supported image and converts it to gray by channel averaging.
pub fn load_gray(path: &Path) -> Result<GrayImage, ImageError> {
    let img = image::open(path).map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?;
    if let image::DynamicImage::ImageLuma8(g) = &img {
        let (w, h) = g.dimensions();
        let data = g.pixels().map(|p| p[0] as f64 / 255.0).collect();
        return GrayImage::new(w as usize, h as usize, data);
    }
    let color = load_color(path)?;
    super::to_gray(&color)
}

pub fn to_luma8(img: &GrayImage) -> image::GrayImage {
    let buf = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    image::GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer matches dimensions")
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    to_luma8(img).save(path).map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))
}
