//! Random HR/LR patch extraction for training.

use super::{bicubic_downsample, ImageF};
use crate::error::{CoreError, Result};
use crate::rng::SeededRng;

/// A high-resolution crop with its bicubic-downsampled counterpart. The LR
/// member is always produced from the clean HR crop; any corruption happens
/// downstream.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub hr: ImageF,
    pub lr: ImageF,
    pub scale: usize,
}

/// Draw `count` uniformly random `patch`-sized HR crops and pair each with
/// its `scale`-times downsampled version. Coordinates come from `rng` (top
/// then left, per patch), so a given seed reproduces the same crops.
pub fn sample_patches(
    img: &ImageF,
    count: usize,
    patch: usize,
    scale: usize,
    rng: &mut SeededRng,
) -> Result<Vec<PatchPair>> {
    if patch == 0 || scale == 0 || patch % scale != 0 {
        return Err(CoreError::invalid(
            "sample_patches",
            format!("patch {patch} must be a positive multiple of scale {scale}"),
        ));
    }
    if img.height() < patch || img.width() < patch {
        return Err(CoreError::invalid(
            "sample_patches",
            format!(
                "image {}x{} smaller than patch {patch}",
                img.width(),
                img.height()
            ),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let top = rng.below(img.height() - patch + 1);
        let left = rng.below(img.width() - patch + 1);
        let hr = img.crop(top, left, patch, patch)?;
        let lr = bicubic_downsample(&hr, scale)?;
        out.push(PatchPair { hr, lr, scale });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> ImageF {
        let (h, w) = (12, 10);
        let data = (0..h * w * 3).map(|i| (i % 97) as f32 / 96.0).collect();
        ImageF::new(h, w, data).unwrap()
    }

    #[test]
    fn zero_count_gives_empty_list() {
        let img = test_image();
        let pairs = sample_patches(&img, 0, 4, 2, &mut SeededRng::new(1)).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn same_seed_same_crops() {
        let img = test_image();
        let a = sample_patches(&img, 5, 4, 2, &mut SeededRng::new(7)).unwrap();
        let b = sample_patches(&img, 5, 4, 2, &mut SeededRng::new(7)).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.hr, pb.hr);
            assert_eq!(pa.lr, pb.lr);
        }
    }

    #[test]
    fn hr_patches_are_exact_subwindows() {
        let img = test_image();
        let pairs = sample_patches(&img, 8, 4, 2, &mut SeededRng::new(3)).unwrap();
        for pair in &pairs {
            assert_eq!(pair.hr.height(), 4);
            assert_eq!(pair.lr.height(), 2);
            // Audit the crop against every possible source position.
            let mut found = false;
            'scan: for top in 0..=img.height() - 4 {
                for left in 0..=img.width() - 4 {
                    if img.crop(top, left, 4, 4).unwrap() == pair.hr {
                        found = true;
                        break 'scan;
                    }
                }
            }
            assert!(found, "patch is not a sub-window of the source image");
        }
    }

    #[test]
    fn too_small_image_is_error() {
        let img = ImageF::constant(3, 3, 0.5).unwrap();
        assert!(sample_patches(&img, 1, 4, 2, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn patch_must_divide_by_scale() {
        let img = test_image();
        assert!(sample_patches(&img, 1, 5, 2, &mut SeededRng::new(1)).is_err());
    }
}
