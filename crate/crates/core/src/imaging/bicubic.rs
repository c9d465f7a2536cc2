//! Separable bicubic resampling with the Catmull-Rom kernel (a = -0.5).
//!
//! Output pixel centers map to source coordinates via
//! `src = (dst + 0.5) * (in_len / out_len) - 0.5`; the four nearest taps are
//! weighted by the kernel and border taps replicate the edge pixel. The
//! kernel is interpolating (weights sum to 1), so constant images stay
//! constant. Values are clamped into [0, 1] only at the very end.

use super::ImageF;
use crate::error::{CoreError, Result};

/// Catmull-Rom kernel value at distance `t` (a = -0.5).
fn kernel(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Four taps (clamped source indices) and weights for one output coordinate.
fn taps(dst: usize, in_len: usize, out_len: usize) -> ([usize; 4], [f64; 4]) {
    let scale = in_len as f64 / out_len as f64;
    let src = (dst as f64 + 0.5) * scale - 0.5;
    let base = src.floor() as isize;
    let frac = src - base as f64;
    let mut idx = [0usize; 4];
    let mut wgt = [0f64; 4];
    for (k, (i, w)) in idx.iter_mut().zip(wgt.iter_mut()).enumerate() {
        let tap = base - 1 + k as isize;
        *i = tap.clamp(0, in_len as isize - 1) as usize;
        *w = kernel(frac - (k as f64 - 1.0));
    }
    (idx, wgt)
}

fn resize(img: &ImageF, out_h: usize, out_w: usize) -> ImageF {
    let (h, w) = (img.height(), img.width());
    let src = img.data();

    // Horizontal pass: h x out_w, unclamped intermediate.
    let mut mid = vec![0.0f64; h * out_w * 3];
    for ox in 0..out_w {
        let (idx, wgt) = taps(ox, w, out_w);
        for y in 0..h {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for k in 0..4 {
                    acc += wgt[k] * src[(y * w + idx[k]) * 3 + c] as f64;
                }
                mid[(y * out_w + ox) * 3 + c] = acc;
            }
        }
    }

    // Vertical pass, clamp at the end.
    let mut out = vec![0.0f32; out_h * out_w * 3];
    for oy in 0..out_h {
        let (idx, wgt) = taps(oy, h, out_h);
        for ox in 0..out_w {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for k in 0..4 {
                    acc += wgt[k] * mid[(idx[k] * out_w + ox) * 3 + c];
                }
                out[(oy * out_w + ox) * 3 + c] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageF::new(out_h, out_w, out).expect("clamped output")
}

/// Downsample by an integer factor; dimensions must divide evenly.
pub fn bicubic_downsample(img: &ImageF, factor: usize) -> Result<ImageF> {
    if factor == 0 {
        return Err(CoreError::invalid("bicubic_downsample", "factor must be >= 1"));
    }
    let (h, w) = (img.height(), img.width());
    if h % factor != 0 || w % factor != 0 {
        return Err(CoreError::invalid(
            "bicubic_downsample",
            format!("dimensions {w}x{h} not divisible by factor {factor}"),
        ));
    }
    Ok(resize(img, h / factor, w / factor))
}

/// Upsample by an integer factor.
pub fn bicubic_upsample(img: &ImageF, factor: usize) -> Result<ImageF> {
    if factor == 0 {
        return Err(CoreError::invalid("bicubic_upsample", "factor must be >= 1"));
    }
    Ok(resize(img, img.height() * factor, img.width() * factor))
}
