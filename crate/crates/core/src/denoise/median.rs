//! Per-channel median filter with symmetric (edge-duplicating) reflect
//! padding: index -1 maps to 0, index n to n-1.

use crate::error::{CoreError, Result};
use crate::imaging::ImageF;
use crate::parallel::for_each_chunk_mut;

pub(crate) fn reflect(idx: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = idx;
    // One bounce suffices for window radii below the image size; loop to be
    // safe for tiny images.
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Replace each pixel, per channel, by the median of its window x window
/// reflect-padded neighborhood.
pub fn median_filter(img: &ImageF, window: usize) -> Result<ImageF> {
    if window % 2 == 0 || window == 0 {
        return Err(CoreError::invalid(
            "median_filter",
            format!("window must be odd, got {window}"),
        ));
    }
    let (h, w) = (img.height(), img.width());
    let radius = (window / 2) as isize;
    let src = img.data();
    let mut out = vec![0.0f32; src.len()];
    let mid = (window * window) / 2;

    for_each_chunk_mut(&mut out, w * 3, |y, row| {
        let mut buf = vec![0.0f32; window * window];
        for x in 0..w {
            for c in 0..3 {
                let mut n = 0;
                for dy in -radius..=radius {
                    let sy = reflect(y as isize + dy, h);
                    for dx in -radius..=radius {
                        let sx = reflect(x as isize + dx, w);
                        buf[n] = src[(sy * w + sx) * 3 + c];
                        n += 1;
                    }
                }
                let (_, median, _) = buf.select_nth_unstable_by(mid, |a, b| {
                    a.partial_cmp(b).expect("image values are finite")
                });
                row[x * 3 + c] = *median;
            }
        }
    });

    ImageF::new(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn reflect_is_edge_duplicating() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }

    #[test]
    fn single_impulse_is_removed() {
        let mut data = vec![0.2f32; 5 * 5 * 3];
        let center = (2 * 5 + 2) * 3;
        data[center] = 1.0;
        data[center + 1] = 1.0;
        data[center + 2] = 1.0;
        let img = ImageF::new(5, 5, data).unwrap();
        let out = median_filter(&img, 5).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn constant_image_unchanged() {
        let img = ImageF::constant(7, 6, 0.55).unwrap();
        assert_eq!(median_filter(&img, 3).unwrap(), img);
    }

    #[test]
    fn even_window_is_error() {
        let img = ImageF::constant(4, 4, 0.5).unwrap();
        assert!(median_filter(&img, 4).is_err());
    }

    /// Sort-based per-window oracle with the same reflect padding.
    fn oracle(img: &ImageF, window: usize) -> Vec<f32> {
        let (h, w) = (img.height(), img.width());
        let r = (window / 2) as isize;
        let mut out = vec![0.0f32; h * w * 3];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut vals = Vec::with_capacity(window * window);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let sy = reflect(y as isize + dy, h);
                            let sx = reflect(x as isize + dx, w);
                            vals.push(img.get(sy, sx, c));
                        }
                    }
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    out[(y * w + x) * 3 + c] = vals[vals.len() / 2];
                }
            }
        }
        out
    }

    #[test]
    fn random_image_matches_sort_oracle_exactly() {
        let mut rng = SeededRng::new(33);
        let data: Vec<f32> = (0..8 * 8 * 3).map(|_| rng.uniform_f32()).collect();
        let img = ImageF::new(8, 8, data).unwrap();
        let got = median_filter(&img, 3).unwrap();
        assert_eq!(got.data(), &oracle(&img, 3)[..]);
        let got5 = median_filter(&img, 5).unwrap();
        assert_eq!(got5.data(), &oracle(&img, 5)[..]);
    }
}
