//! Locally adaptive (Lee-style) Wiener filter.
//!
//! Per channel, with the same reflect padding as the median filter: compute
//! the local mean and variance over the window, estimate the noise power as
//! the channel-wide mean of the local variances, then shrink each pixel
//! toward its local mean:
//!
//! ```text
//! gain = max(var_local - noise, 0) / max(var_local, noise)
//! y    = mean + gain * (x - mean)
//! ```
//!
//! The gain lies in [0, 1], so the output never overshoots the input's
//! deviation from the local mean.

use super::median::reflect;
use crate::error::{CoreError, Result};
use crate::imaging::ImageF;
use crate::parallel::for_each_chunk_mut;

pub fn wiener_filter(img: &ImageF, window: usize) -> Result<ImageF> {
    if window % 2 == 0 || window == 0 {
        return Err(CoreError::invalid(
            "wiener_filter",
            format!("window must be odd, got {window}"),
        ));
    }
    let (h, w) = (img.height(), img.width());
    let radius = (window / 2) as isize;
    let count = (window * window) as f64;
    let src = img.data();

    // Pass 1: local mean and variance per pixel-channel.
    let mut mean = vec![0.0f64; h * w * 3];
    let mut var = vec![0.0f64; h * w * 3];
    {
        // Borrow both halves mutably through one chunked pass over rows.
        let mut stats = vec![0.0f64; 2 * h * w * 3];
        for_each_chunk_mut(&mut stats, 2 * w * 3, |y, row| {
            let (mean_row, var_row) = row.split_at_mut(w * 3);
            for x in 0..w {
                for c in 0..3 {
                    let mut s = 0.0f64;
                    let mut s2 = 0.0f64;
                    for dy in -radius..=radius {
                        let sy = reflect(y as isize + dy, h);
                        for dx in -radius..=radius {
                            let sx = reflect(x as isize + dx, w);
                            let v = src[(sy * w + sx) * 3 + c] as f64;
                            s += v;
                            s2 += v * v;
                        }
                    }
                    let m = s / count;
                    mean_row[x * 3 + c] = m;
                    var_row[x * 3 + c] = (s2 / count - m * m).max(0.0);
                }
            }
        });
        for y in 0..h {
            let base = y * 2 * w * 3;
            mean[y * w * 3..][..w * 3].copy_from_slice(&stats[base..][..w * 3]);
            var[y * w * 3..][..w * 3].copy_from_slice(&stats[base + w * 3..][..w * 3]);
        }
    }

    // Pass 2: per-channel noise power = mean of local variances.
    let mut noise = [0.0f64; 3];
    for c in 0..3 {
        let mut acc = 0.0f64;
        for px in 0..h * w {
            acc += var[px * 3 + c];
        }
        noise[c] = acc / (h * w) as f64;
    }

    // Pass 3: shrink toward the local mean.
    let mut out = vec![0.0f32; h * w * 3];
    for (i, o) in out.iter_mut().enumerate() {
        let c = i % 3;
        let m = mean[i];
        let v = var[i];
        let gain = if v > noise[c] {
            (v - noise[c]) / v.max(noise[c])
        } else {
            0.0
        };
        let y = m + gain * (src[i] as f64 - m);
        *o = y.clamp(0.0, 1.0) as f32;
    }
    ImageF::new(h, w, out)
}
