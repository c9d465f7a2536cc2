//! Seeded random test data.

use nsrkit_core::imaging::ImageF;
use nsrkit_core::rng::SeededRng;
use nsrkit_core::tensor::Tensor;

/// Uniform values in [lo, hi).
pub fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| lo + (hi - lo) * rng.uniform_f32()).collect()
}

/// Signed values with magnitude in [mag_lo, mag_hi); never near zero.
pub fn signed_vec(rng: &mut SeededRng, n: usize, mag_lo: f32, mag_hi: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let mag = mag_lo + (mag_hi - mag_lo) * rng.uniform_f32();
            if rng.uniform() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

pub fn tensor(rng: &mut SeededRng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(uniform_vec(rng, n, lo, hi), shape).unwrap()
}

pub fn grad_tensor(rng: &mut SeededRng, shape: &[usize], mag_lo: f32, mag_hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::leaf_with_grad(signed_vec(rng, n, mag_lo, mag_hi), shape).unwrap()
}

pub fn image(rng: &mut SeededRng, h: usize, w: usize) -> ImageF {
    ImageF::new(h, w, uniform_vec(rng, h * w * 3, 0.0, 1.0)).unwrap()
}
