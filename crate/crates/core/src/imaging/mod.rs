//! Floating-point RGB images, PNG I/O, bicubic resampling, patch extraction
//! and the PSNR metric.

mod bicubic;
mod patches;
mod png;
mod psnr;

pub use bicubic::{bicubic_downsample, bicubic_upsample};
pub use patches::{sample_patches, PatchPair};
pub use png::{load_png, save_png};
pub use psnr::psnr;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// RGB image with f32 values in [0, 1], row-major HWC layout.
#[derive(Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl std::fmt::Debug for ImageF {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageF({}x{})", self.width, self.height)
    }
}

impl ImageF {
    /// Build from raw HWC data, validating length, range and finiteness.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<ImageF> {
        if height == 0 || width == 0 {
            return Err(CoreError::invalid("image", "dimensions must be >= 1"));
        }
        if data.len() != height * width * 3 {
            return Err(CoreError::shape(
                "image",
                format!(
                    "{}x{} RGB needs {} values, got {}",
                    width,
                    height,
                    height * width * 3,
                    data.len()
                ),
            ));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::invalid(
                "image",
                format!("value {} at flat index {bad} outside [0, 1]", data[bad]),
            ));
        }
        Ok(ImageF {
            height,
            width,
            data,
        })
    }

    /// Build from raw HWC data, clamping every value into [0, 1].
    pub fn from_data_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<ImageF> {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        ImageF::new(height, width, data)
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<ImageF> {
        ImageF::new(height, width, vec![value; height * width * 3])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    /// Axis-aligned crop. The window must lie inside the image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ImageF> {
        if top + height > self.height || left + width > self.width {
            return Err(CoreError::invalid(
                "crop",
                format!(
                    "window {width}x{height}+{left}+{top} exceeds image {}x{}",
                    self.width, self.height
                ),
            ));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            let row = ((top + y) * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        ImageF::new(height, width, data)
    }
}

/// HWC image to a `[1, 3, H, W]` tensor.
pub fn image_to_tensor(img: &ImageF) -> Tensor {
    let (h, w) = (img.height(), img.width());
    let mut data = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data[(c * h + y) * w + x] = img.get(y, x, c);
            }
        }
    }
    Tensor::from_vec(data, &[1, 3, h, w]).expect("image data is finite")
}

/// `[1, 3, H, W]` tensor to an HWC image, clamping into [0, 1].
pub fn tensor_to_image(t: &Tensor) -> Result<ImageF> {
    let s = t.shape();
    if s.len() != 4 || s[0] != 1 || s[1] != 3 {
        return Err(CoreError::shape(
            "tensor_to_image",
            format!("expected [1, 3, H, W], got {s:?}"),
        ));
    }
    batch_to_image(t, 0)
}

/// Stack per-image CHW planes into an `[N, 3, H, W]` batch tensor.
pub fn images_to_batch(images: &[ImageF]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| CoreError::invalid("images_to_batch", "empty image list"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = vec![0.0f32; images.len() * 3 * h * w];
    for (i, img) in images.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(CoreError::shape(
                "images_to_batch",
                format!(
                    "image {i} is {}x{}, expected {w}x{h}",
                    img.width(),
                    img.height()
                ),
            ));
        }
        let base = i * 3 * h * w;
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[base + (c * h + y) * w + x] = img.get(y, x, c);
                }
            }
        }
    }
    Tensor::from_vec(data, &[images.len(), 3, h, w])
}

/// Extract image `i` of an `[N, 3, H, W]` batch tensor, clamping into [0, 1].
pub fn batch_to_image(t: &Tensor, i: usize) -> Result<ImageF> {
    let s = t.shape();
    if s.len() != 4 || s[1] != 3 || i >= s[0] {
        return Err(CoreError::shape(
            "batch_to_image",
            format!("index {i} into batch of shape {s:?}"),
        ));
    }
    let (h, w) = (s[2], s[3]);
    let src = &t.data()[i * 3 * h * w..][..3 * h * w];
    let mut data = vec![0.0f32; h * w * 3];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                data[(y * w + x) * 3 + c] = src[(c * h + y) * w + x].clamp(0.0, 1.0);
            }
        }
    }
    ImageF::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates_range_and_length() {
        assert!(ImageF::new(1, 1, vec![0.0, 0.5, 1.0]).is_ok());
        assert!(ImageF::new(1, 1, vec![0.0, 0.5]).is_err());
        assert!(ImageF::new(1, 1, vec![0.0, 0.5, 1.1]).is_err());
        assert!(ImageF::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn tensor_round_trip_is_exact() {
        let img = ImageF::new(
            2,
            2,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.25],
        )
        .unwrap();
        let back = tensor_to_image(&image_to_tensor(&img)).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn tensor_to_image_clamps() {
        let t = Tensor::from_vec(vec![1.7, -0.2, 0.5], &[1, 3, 1, 1]).unwrap();
        let img = tensor_to_image(&t).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn layout_pixel_lands_at_chw_index() {
        // Pixel (y=1, x=2, c=0) must land at tensor index [0, 0, 1, 2].
        let mut data = vec![0.0f32; 3 * 4 * 3];
        data[(4 + 2) * 3] = 0.77;
        let img = ImageF::new(3, 4, data).unwrap();
        let t = image_to_tensor(&img);
        let w = 4;
        assert_eq!(t.data()[w + 2], 0.77);
    }

    #[test]
    fn crop_is_exact_subwindow() {
        let img = ImageF::new(3, 3, (0..27).map(|i| i as f32 / 27.0).collect()).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                for ch in 0..3 {
                    assert_eq!(c.get(y, x, ch), img.get(y + 1, x + 1, ch));
                }
            }
        }
        assert!(img.crop(2, 2, 2, 2).is_err());
    }

    #[test]
    fn batch_round_trip() {
        let a = ImageF::constant(2, 3, 0.25).unwrap();
        let b = ImageF::constant(2, 3, 0.75).unwrap();
        let batch = images_to_batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(batch.shape(), &[2, 3, 2, 3]);
        assert_eq!(batch_to_image(&batch, 0).unwrap(), a);
        assert_eq!(batch_to_image(&batch, 1).unwrap(), b);
    }
}
