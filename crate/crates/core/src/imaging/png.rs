//! 8-bit RGB PNG load/save. Grayscale and alpha images are promoted to RGB
//! on load; higher bit depths are rejected rather than silently truncated.

use std::path::Path;

use image::{DynamicImage, RgbImage};

use super::ImageF;
use crate::error::{CoreError, Result};

/// Decode an 8-bit PNG to floats via v / 255.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| CoreError::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let rgb: RgbImage = match decoded {
        DynamicImage::ImageRgb8(img) => img,
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            decoded.to_rgb8()
        }
        other => {
            return Err(CoreError::Image {
                path: path.display().to_string(),
                detail: format!("unsupported bit depth/color type {:?}; expected 8-bit", other.color()),
            })
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    ImageF::new(h, w, data)
}

/// Quantize with round(clamp(v, 0, 1) * 255) and write an 8-bit RGB PNG.
pub fn save_png(img: &ImageF, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let rgb = RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    rgb.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CoreError::Image {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn save_load_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.png");
        let mut rng = SeededRng::new(42);
        let data: Vec<f32> = (0..16 * 16 * 3).map(|_| rng.uniform_f32()).collect();
        let img = ImageF::new(16, 16, data).unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 255.0, "max err {max_err}");
    }

    #[test]
    fn quantization_is_exactly_invertible_on_grid_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.png");
        let data: Vec<f32> = (0..4 * 4 * 3).map(|i| (i % 256) as f32 / 255.0).collect();
        let img = ImageF::new(4, 4, data).unwrap();
        save_png(&img, &path).unwrap();
        assert_eq!(load_png(&path).unwrap(), img);
    }

    #[test]
    fn non_image_file_is_descriptive_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_png.png");
        std::fs::write(&path, b"definitely not a png").unwrap();
        let err = load_png(&path).unwrap_err().to_string();
        assert!(err.contains("not_a_png.png"), "{err}");
    }

    #[test]
    fn missing_file_is_error() {
        assert!(load_png("/nonexistent/missing.png").is_err());
    }

    #[test]
    fn grayscale_promotes_to_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let gray = image::GrayImage::from_fn(2, 2, |x, y| image::Luma([(x * 100 + y * 50) as u8]));
        gray.save_with_format(&path, image::ImageFormat::Png).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.width(), 2);
        for y in 0..2 {
            for x in 0..2 {
                let v = img.get(y, x, 0);
                assert_eq!(v, img.get(y, x, 1));
                assert_eq!(v, img.get(y, x, 2));
            }
        }
    }

    #[test]
    fn sixteen_bit_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let deep = image::ImageBuffer::<image::Rgb<u16>, _>::from_pixel(2, 2, image::Rgb([1000u16; 3]));
        deep.save_with_format(&path, image::ImageFormat::Png).unwrap();
        let err = load_png(&path).unwrap_err().to_string();
        assert!(err.contains("bit depth"), "{err}");
    }
}
