//! Naive reference implementations and the randomized equivalence sweep.

use nsrkit_core::denoise::{median_filter, wiener_filter};
use nsrkit_core::imaging::{psnr, ImageF};
use nsrkit_core::rng::SeededRng;
use nsrkit_core::tensor::{conv2d, max_pool2, pixel_shuffle, Tensor};

use crate::gen;

/// Widen f32 tensor data for the f64 reference implementations.
pub fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// Six nested loops over batch, output channel, output position, input
/// channel and kernel position; f64 arithmetic, zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_naive(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    n: usize,
    cin: usize,
    h: usize,
    wd: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = h + 2 * pad - kh + 1;
    let ow = wd + 2 * pad - kw + 1;
    let mut out = vec![0.0f64; n * cout * oh * ow];
    for ni in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy as isize + ky as isize - pad as isize;
                                let ix = ox as isize + kx as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < wd as isize {
                                    let xv = x[((ni * cin + ci) * h + iy as usize) * wd
                                        + ix as usize];
                                    let wv = w[((co * cin + ci) * kh + ky) * kw + kx];
                                    acc += xv * wv;
                                }
                            }
                        }
                    }
                    out[((ni * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Explicit 2x2 window scan.
pub fn max_pool2_naive(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f64; n * c * oh * ow];
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = x[p * h * w + (2 * oy + dy) * w + 2 * ox + dx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[p * oh * ow + oy * ow + ox] = best;
            }
        }
    }
    out
}

/// Direct application of the index map
/// out[n][c][y*r+i][x*r+j] = in[n][c*r*r + i*r + j][y][x].
pub fn pixel_shuffle_naive(
    x: &[f64],
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    r: usize,
) -> Vec<f64> {
    let c_out = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f64; x.len()];
    for ni in 0..n {
        for c in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y, i) = (oy / r, oy % r);
                    let (xx, j) = (ox / r, ox % r);
                    let ch = c * r * r + i * r + j;
                    out[((ni * c_out + c) * oh + oy) * ow + ox] =
                        x[((ni * c_in + ch) * h + y) * w + xx];
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle_naive`].
pub fn pixel_unshuffle_naive(
    x: &[f64],
    n: usize,
    c_out: usize,
    hh: usize,
    ww: usize,
    r: usize,
) -> Vec<f64> {
    let c_in = c_out * r * r;
    let (h, w) = (hh / r, ww / r);
    let mut out = vec![0.0f64; x.len()];
    for ni in 0..n {
        for c in 0..c_out {
            for oy in 0..hh {
                for ox in 0..ww {
                    let (y, i) = (oy / r, oy % r);
                    let (xx, j) = (ox / r, ox % r);
                    let ch = c * r * r + i * r + j;
                    out[((ni * c_in + ch) * h + y) * w + xx] =
                        x[((ni * c_out + c) * hh + oy) * ww + ox];
                }
            }
        }
    }
    out
}

/// Per-output-channel weight normalization: w = g * v / ||v||.
pub fn weight_norm_naive(v: &[f64], g: &[f64], cout: usize) -> Vec<f64> {
    let per = v.len() / cout;
    let mut out = vec![0.0f64; v.len()];
    for c in 0..cout {
        let norm = v[c * per..][..per].iter().map(|x| x * x).sum::<f64>().sqrt();
        for (o, &x) in out[c * per..][..per].iter_mut().zip(&v[c * per..][..per]) {
            *o = g[c] * x / norm;
        }
    }
    out
}

fn reflect(idx: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = idx;
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

/// Gather-sort median with edge-duplicating reflect padding.
pub fn median_naive(img: &ImageF, window: usize) -> Vec<f32> {
    let (h, w) = (img.height(), img.width());
    let r = (window / 2) as isize;
    let mut out = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut vals = Vec::with_capacity(window * window);
                for dy in -r..=r {
                    for dx in -r..=r {
                        vals.push(img.get(reflect(y as isize + dy, h), reflect(x as isize + dx, w), c));
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out[(y * w + x) * 3 + c] = vals[vals.len() / 2];
            }
        }
    }
    out
}

/// Two-pass locally adaptive Wiener evaluated straight from its formula.
pub fn wiener_naive(img: &ImageF, window: usize) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let r = (window / 2) as isize;
    let count = (window * window) as f64;
    let mut mean = vec![0.0f64; h * w * 3];
    let mut var = vec![0.0f64; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut vals = Vec::with_capacity(window * window);
                for dy in -r..=r {
                    for dx in -r..=r {
                        vals.push(img.get(
                            reflect(y as isize + dy, h),
                            reflect(x as isize + dx, w),
                            c,
                        ) as f64);
                    }
                }
                let m: f64 = vals.iter().sum::<f64>() / count;
                let v: f64 = vals.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / count;
                mean[(y * w + x) * 3 + c] = m;
                var[(y * w + x) * 3 + c] = v;
            }
        }
    }
    let mut noise = [0.0f64; 3];
    for c in 0..3 {
        noise[c] = (0..h * w).map(|p| var[p * 3 + c]).sum::<f64>() / (h * w) as f64;
    }
    (0..h * w * 3)
        .map(|i| {
            let c = i % 3;
            let g = if var[i] > noise[c] {
                (var[i] - noise[c]) / var[i].max(noise[c])
            } else {
                0.0
            };
            let x = img.data()[i] as f64;
            (mean[i] + g * (x - mean[i])).clamp(0.0, 1.0)
        })
        .collect()
}

/// Double-loop PSNR.
pub fn psnr_naive(a: &ImageF, b: &ImageF) -> f64 {
    let mut acc = 0.0f64;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..3 {
                let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                acc += d * d;
            }
        }
    }
    let mse = acc / (a.height() * a.width() * 3) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Worst observed deviation per operation over the sweep.
#[derive(Debug, Default)]
pub struct SweepReport {
    pub conv2d_max_err: f64,
    pub max_pool_exact: bool,
    pub pixel_shuffle_exact: bool,
    pub median_exact: bool,
    pub wiener_max_err: f64,
    pub psnr_max_err_db: f64,
    pub instances: usize,
}

impl SweepReport {
    pub fn passes(&self) -> bool {
        self.conv2d_max_err <= 1e-5
            && self.max_pool_exact
            && self.pixel_shuffle_exact
            && self.median_exact
            && self.wiener_max_err <= 1e-5
            && self.psnr_max_err_db <= 1e-9
    }

    pub fn summary(&self) -> String {
        format!(
            "conv2d {:.2e} | max_pool exact: {} | pixel_shuffle exact: {} | median exact: {} | wiener {:.2e} | psnr {:.2e} dB ({} instances/op)",
            self.conv2d_max_err,
            self.max_pool_exact,
            self.pixel_shuffle_exact,
            self.median_exact,
            self.wiener_max_err,
            self.psnr_max_err_db,
            self.instances
        )
    }
}

/// Randomized equivalence sweep: `instances` random small inputs per
/// operation, each compared against its oracle above.
pub fn run_oracle_sweep(instances: usize, seed: u64) -> SweepReport {
    let mut rng = SeededRng::new(seed);
    let mut report = SweepReport {
        max_pool_exact: true,
        pixel_shuffle_exact: true,
        median_exact: true,
        instances,
        ..Default::default()
    };

    for _ in 0..instances {
        // conv2d
        {
            let (n, cin, cout) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3));
            let k = [1, 3, 5][rng.below(3)];
            let (h, w) = (k + rng.below(5), k + rng.below(5));
            let pad = rng.below(k / 2 + 1);
            let x = gen::tensor(&mut rng, &[n, cin, h, w], -1.0, 1.0);
            let wt = gen::tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0);
            let b = gen::tensor(&mut rng, &[cout], -0.5, 0.5);
            let got = conv2d(&x, &wt, &b, pad).unwrap();
            let want = conv2d_naive(
                &to_f64(x.data()),
                &to_f64(wt.data()),
                &to_f64(b.data()),
                n,
                cin,
                h,
                w,
                cout,
                k,
                k,
                pad,
            );
            for (g, e) in got.data().iter().zip(&want) {
                report.conv2d_max_err = report.conv2d_max_err.max((*g as f64 - e).abs());
            }
        }
        // max_pool2
        {
            let (n, c) = (1 + rng.below(2), 1 + rng.below(3));
            let (h, w) = (2 + 2 * rng.below(4), 2 + 2 * rng.below(4));
            let x = gen::tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
            let got = max_pool2(&x).unwrap();
            let want = max_pool2_naive(&to_f64(x.data()), n, c, h, w);
            if got.data().iter().zip(&want).any(|(g, e)| *g as f64 != *e) {
                report.max_pool_exact = false;
            }
        }
        // pixel_shuffle
        {
            let r = 1 + rng.below(3);
            let c_out = 1 + rng.below(3);
            let (n, h, w) = (1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(4));
            let x = gen::tensor(&mut rng, &[n, c_out * r * r, h, w], -1.0, 1.0);
            let got = pixel_shuffle(&x, r).unwrap();
            let want = pixel_shuffle_naive(&to_f64(x.data()), n, c_out * r * r, h, w, r);
            if got.data().iter().zip(&want).any(|(g, e)| *g as f64 != *e) {
                report.pixel_shuffle_exact = false;
            }
        }
        // median_filter
        {
            let window = [3, 5][rng.below(2)];
            let (h, w) = (4 + rng.below(6), 4 + rng.below(6));
            let img = gen::image(&mut rng, h, w);
            let got = median_filter(&img, window).unwrap();
            if got.data() != &median_naive(&img, window)[..] {
                report.median_exact = false;
            }
        }
        // wiener_filter
        {
            let window = [3, 5][rng.below(2)];
            let (h, w) = (4 + rng.below(6), 4 + rng.below(6));
            let img = gen::image(&mut rng, h, w);
            let got = wiener_filter(&img, window).unwrap();
            for (g, e) in got.data().iter().zip(wiener_naive(&img, window)) {
                report.wiener_max_err = report.wiener_max_err.max((*g as f64 - e).abs());
            }
        }
        // psnr
        {
            let (h, w) = (3 + rng.below(8), 3 + rng.below(8));
            let a = gen::image(&mut rng, h, w);
            let b = gen::image(&mut rng, h, w);
            let got = psnr(&a, &b).unwrap();
            let want = psnr_naive(&a, &b);
            report.psnr_max_err_db = report.psnr_max_err_db.max((got - want).abs());
        }
    }
    report
}
