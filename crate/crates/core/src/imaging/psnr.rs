//! Peak signal-to-noise ratio with peak value 1.0, computed over all pixels
//! and channels in f64. Identical images report `f64::INFINITY`; reports
//! render that as the string "inf" rather than a fake large number.

use super::ImageF;
use crate::error::{CoreError, Result};

pub fn psnr(a: &ImageF, b: &ImageF) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(CoreError::shape(
            "psnr",
            format!(
                "{}x{} vs {}x{}",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            ),
        ));
    }
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn uniform_offset_gives_twenty_db() {
        // 0.4 vs 0.5 everywhere: MSE = 0.01, PSNR = 20 dB (to f32 storage).
        let a = ImageF::constant(8, 8, 0.4).unwrap();
        let b = ImageF::constant(8, 8, 0.5).unwrap();
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "psnr {p}");
    }

    #[test]
    fn identical_images_are_infinite() {
        let a = ImageF::constant(4, 4, 0.3).unwrap();
        assert!(psnr(&a, &a).unwrap().is_infinite());
    }

    #[test]
    fn random_pair_matches_double_loop_oracle() {
        let mut rng = SeededRng::new(21);
        let (h, w) = (9, 7);
        let da: Vec<f32> = (0..h * w * 3).map(|_| rng.uniform_f32()).collect();
        let db: Vec<f32> = (0..h * w * 3).map(|_| rng.uniform_f32()).collect();
        let a = ImageF::new(h, w, da).unwrap();
        let b = ImageF::new(h, w, db).unwrap();

        // Naive per-pixel, per-channel oracle.
        let mut acc = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                    acc += d * d;
                }
            }
        }
        let expected = 10.0 * (1.0 / (acc / (h * w * 3) as f64)).log10();
        let got = psnr(&a, &b).unwrap();
        assert!((got - expected).abs() <= 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn symmetric_and_monotone() {
        let base = ImageF::constant(6, 6, 0.5).unwrap();
        let mut last = f64::INFINITY;
        for step in 1..=4 {
            let off = 0.05 * step as f32;
            let shifted = ImageF::constant(6, 6, 0.5 + off).unwrap();
            let p = psnr(&base, &shifted).unwrap();
            assert_eq!(p, psnr(&shifted, &base).unwrap());
            assert!(p < last, "psnr must fall as the perturbation grows");
            last = p;
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = ImageF::constant(4, 4, 0.5).unwrap();
        let b = ImageF::constant(4, 5, 0.5).unwrap();
        assert!(psnr(&a, &b).is_err());
    }
}
