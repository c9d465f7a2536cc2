//! Forward operations and the graph nodes they record.
//!
//! Convolution is plain cross-correlation (no kernel flip) with zero
//! padding. All loops accumulate each output element in a fixed order, so
//! results are bit-identical across runs and across the parallel/sequential
//! paths.

use super::Tensor;
use crate::error::{CoreError, Result};
use crate::parallel::for_each_chunk_mut;

/// Backward recipe attached to a result tensor. Holds the parent tensors
/// (keeping the graph alive) plus cached values the backward pass needs.
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Relu(Tensor),
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        padding: usize,
    },
    MaxPool2 {
        input: Tensor,
        /// Flat index into the input data of each output's argmax.
        argmax: Vec<u32>,
    },
    NearestUp2(Tensor),
    PixelShuffle {
        input: Tensor,
        r: usize,
    },
    PixelUnshuffle {
        input: Tensor,
        r: usize,
    },
    WeightNorm {
        v: Tensor,
        g: Tensor,
        /// Cached 1 / ||v_c|| per output channel.
        inv_norm: Vec<f32>,
    },
    Mae {
        pred: Tensor,
        target: Tensor,
    },
    Mse {
        pred: Tensor,
        target: Tensor,
    },
    Sum(Tensor),
    /// Adds a constant per-channel offset; gradient passes through unchanged.
    OffsetChannels(Tensor),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Relu(x)
            | Op::NearestUp2(x)
            | Op::Sum(x)
            | Op::OffsetChannels(x)
            | Op::PixelShuffle { input: x, .. }
            | Op::PixelUnshuffle { input: x, .. }
            | Op::MaxPool2 { input: x, .. } => vec![x],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![input, weight, bias],
            Op::WeightNorm { v, g, .. } => vec![v, g],
            Op::Mae { pred, target } | Op::Mse { pred, target } => vec![pred, target],
        }
    }
}

fn dims4(t: &Tensor, op: &'static str, role: &str) -> Result<[usize; 4]> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(CoreError::shape(
            op,
            format!("{role} must be 4-D (NCHW), got shape {s:?}"),
        ));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

/// Elementwise sum of two same-shape tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(CoreError::shape(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        Op::Add(a.clone(), b.clone()),
    ))
}

/// Elementwise product of two same-shape tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(CoreError::shape(
            "mul",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        Op::Mul(a.clone(), b.clone()),
    ))
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_op(data, x.shape().to_vec(), Op::Relu(x.clone()))
}

/// 2-D cross-correlation with zero padding.
///
/// `input` is `[N, Cin, H, W]`, `weight` is `[Cout, Cin, kH, kW]` with odd
/// kernel sides, `bias` is `[Cout]`. Output spatial size is
/// `H + 2*padding - kH + 1` (same for width).
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, padding: usize) -> Result<Tensor> {
    let [n, cin, h, w] = dims4(input, "conv2d", "input")?;
    let [cout, wcin, kh, kw] = dims4(weight, "conv2d", "weight")?;
    if wcin != cin {
        return Err(CoreError::shape(
            "conv2d",
            format!("input has {cin} channels but weight expects {wcin}"),
        ));
    }
    if bias.shape() != [cout] {
        return Err(CoreError::shape(
            "conv2d",
            format!("bias shape {:?} but weight has {cout} output channels", bias.shape()),
        ));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(CoreError::invalid(
            "conv2d",
            format!("kernel sides must be odd, got {kh}x{kw}"),
        ));
    }
    let oh = (h + 2 * padding).checked_sub(kh - 1).filter(|&v| v > 0);
    let ow = (w + 2 * padding).checked_sub(kw - 1).filter(|&v| v > 0);
    let (oh, ow) = match (oh, ow) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CoreError::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * padding, w + 2 * padding),
            ))
        }
    };

    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    let mut out = vec![0.0f32; n * cout * oh * ow];

    for_each_chunk_mut(&mut out, oh * ow, |plane_idx, plane| {
        let ni = plane_idx / cout;
        let co = plane_idx % cout;
        plane.fill(b[co]);
        for ci in 0..cin {
            let in_plane = &x[(ni * cin + ci) * h * w..][..h * w];
            for khi in 0..kh {
                let oh_lo = padding.saturating_sub(khi);
                let oh_hi = oh.min((h + padding).saturating_sub(khi));
                for kwi in 0..kw {
                    let wgt = wt[((co * cin + ci) * kh + khi) * kw + kwi];
                    let ow_lo = padding.saturating_sub(kwi);
                    let ow_hi = ow.min((w + padding).saturating_sub(kwi));
                    if ow_lo >= ow_hi {
                        continue;
                    }
                    for ohi in oh_lo..oh_hi {
                        let ih = ohi + khi - padding;
                        let iw0 = ow_lo + kwi - padding;
                        let src = &in_plane[ih * w + iw0..][..ow_hi - ow_lo];
                        let dst = &mut plane[ohi * ow + ow_lo..][..ow_hi - ow_lo];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
    });

    Ok(Tensor::from_op(
        out,
        vec![n, cout, oh, ow],
        Op::Conv2d {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
            padding,
        },
    ))
}

/// 2x2 max pooling with stride 2. Requires even spatial dimensions; the
/// backward pass routes gradient to the first argmax in row-major window
/// order.
pub fn max_pool2(x: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = dims4(x, "max_pool2", "input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::invalid(
            "max_pool2",
            format!("spatial dims must be even, got {h}x{w}; pad the input first"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = x.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    let mut argmax = vec![0u32; out.len()];
    for p in 0..n * c {
        let plane = &data[p * h * w..][..h * w];
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (2 * oy) * w + 2 * ox;
                let mut best = plane[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * oy + dy) * w + 2 * ox + dx;
                    if plane[idx] > best {
                        best = plane[idx];
                        best_idx = idx;
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                out[o] = best;
                argmax[o] = (base + best_idx) as u32;
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        Op::MaxPool2 {
            input: x.clone(),
            argmax,
        },
    ))
}

/// Replicate every pixel into a 2x2 block.
pub fn nearest_upsample2(x: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = dims4(x, "nearest_upsample2", "input")?;
    let data = x.data();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; n * c * oh * ow];
    for p in 0..n * c {
        let src = &data[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for y in 0..h {
            for xw in 0..w {
                let v = src[y * w + xw];
                dst[(2 * y) * ow + 2 * xw] = v;
                dst[(2 * y) * ow + 2 * xw + 1] = v;
                dst[(2 * y + 1) * ow + 2 * xw] = v;
                dst[(2 * y + 1) * ow + 2 * xw + 1] = v;
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        Op::NearestUp2(x.clone()),
    ))
}

fn shuffle_map(
    n: usize,
    c_out: usize,
    h: usize,
    w: usize,
    r: usize,
    forward: bool,
    src: &[f32],
) -> Vec<f32> {
    // out[n][c][h*r+i][w*r+j] = in[n][c*r*r + i*r + j][h][w]
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f32; n * c_out * r * r * h * w];
    for ni in 0..n {
        for c in 0..c_out {
            for i in 0..r {
                for j in 0..r {
                    let ch_in = c * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let lo = ((ni * c_out * r * r + ch_in) * h + y) * w + x;
                            let hi = ((ni * c_out + c) * oh + y * r + i) * ow + x * r + j;
                            if forward {
                                out[hi] = src[lo];
                            } else {
                                out[lo] = src[hi];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Rearrange `[N, C*r*r, H, W]` into `[N, C, r*H, r*W]`:
/// `out[n][c][h*r+i][w*r+j] = in[n][c*r*r + i*r + j][h][w]`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c_in, h, w] = dims4(x, "pixel_shuffle", "input")?;
    if r == 0 || c_in % (r * r) != 0 {
        return Err(CoreError::invalid(
            "pixel_shuffle",
            format!("channel count {c_in} not divisible by r^2 = {}", r * r),
        ));
    }
    let c_out = c_in / (r * r);
    let out = shuffle_map(n, c_out, h, w, r, true, x.data());
    Ok(Tensor::from_op(
        out,
        vec![n, c_out, h * r, w * r],
        Op::PixelShuffle {
            input: x.clone(),
            r,
        },
    ))
}

/// Inverse of [`pixel_shuffle`]: `[N, C, r*H, r*W]` into `[N, C*r*r, H, W]`.
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let [n, c, hh, ww] = dims4(x, "pixel_unshuffle", "input")?;
    if r == 0 || hh % r != 0 || ww % r != 0 {
        return Err(CoreError::invalid(
            "pixel_unshuffle",
            format!("spatial dims {hh}x{ww} not divisible by r = {r}"),
        ));
    }
    let (h, w) = (hh / r, ww / r);
    let mut out = vec![0.0f32; x.len()];
    let src = x.data();
    // Same index map as pixel_shuffle, read and write swapped.
    for ni in 0..n {
        for c_i in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let ch_out = c_i * r * r + i * r + j;
                    for y in 0..h {
                        for xw in 0..w {
                            let lo = ((ni * c * r * r + ch_out) * h + y) * w + xw;
                            let hi = ((ni * c + c_i) * hh + y * r + i) * ww + xw * r + j;
                            out[lo] = src[hi];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c * r * r, h, w],
        Op::PixelUnshuffle {
            input: x.clone(),
            r,
        },
    ))
}

/// Resolve a weight-normalized kernel: `w = g * v / ||v||` with the norm
/// taken per output channel (dimension 0). Errors on a zero-norm channel.
pub fn weight_norm_resolve(v: &Tensor, g: &Tensor) -> Result<Tensor> {
    let shape = v.shape();
    if shape.is_empty() {
        return Err(CoreError::shape("weight_norm", "v must have rank >= 1"));
    }
    let cout = shape[0];
    if g.shape() != [cout] {
        return Err(CoreError::shape(
            "weight_norm",
            format!("g shape {:?}, expected [{cout}]", g.shape()),
        ));
    }
    let per = v.len() / cout;
    let vd = v.data();
    let gd = g.data();
    let mut inv_norm = vec![0.0f32; cout];
    let mut out = vec![0.0f32; v.len()];
    for c in 0..cout {
        let slice = &vd[c * per..][..per];
        let norm = slice.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CoreError::ZeroNormChannel(c));
        }
        let inv = (1.0 / norm) as f32;
        inv_norm[c] = inv;
        let scale = gd[c] * inv;
        for (o, &x) in out[c * per..][..per].iter_mut().zip(slice) {
            *o = scale * x;
        }
    }
    Ok(Tensor::from_op(
        out,
        shape.to_vec(),
        Op::WeightNorm {
            v: v.clone(),
            g: g.clone(),
            inv_norm,
        },
    ))
}

fn check_same_shape(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(CoreError::shape(
            op,
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    Ok(())
}

/// Mean absolute error over all elements, as a scalar tensor.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same_shape("mae_loss", pred, target)?;
    let n = pred.len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| ((p - t) as f64).abs())
        .sum();
    let value = (total / n) as f32;
    if !value.is_finite() {
        return Err(CoreError::NonFinite {
            op: "mae_loss",
            detail: format!("loss value {value}"),
        });
    }
    Ok(Tensor::from_op(
        vec![value],
        vec![1],
        Op::Mae {
            pred: pred.clone(),
            target: target.clone(),
        },
    ))
}

/// Mean squared error over all elements, as a scalar tensor.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same_shape("mse_loss", pred, target)?;
    let n = pred.len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t) as f64;
            d * d
        })
        .sum();
    let value = (total / n) as f32;
    if !value.is_finite() {
        return Err(CoreError::NonFinite {
            op: "mse_loss",
            detail: format!("loss value {value}"),
        });
    }
    Ok(Tensor::from_op(
        vec![value],
        vec![1],
        Op::Mse {
            pred: pred.clone(),
            target: target.clone(),
        },
    ))
}

/// Sum of all elements, as a scalar tensor.
pub fn sum(x: &Tensor) -> Tensor {
    let total: f64 = x.data().iter().map(|&v| v as f64).sum();
    Tensor::from_op(vec![total as f32], vec![1], Op::Sum(x.clone()))
}

/// Add `offsets[c]` to every element of channel `c` of an NCHW tensor.
pub fn offset_channels(x: &Tensor, offsets: &[f32]) -> Result<Tensor> {
    let [n, c, h, w] = dims4(x, "offset_channels", "input")?;
    if offsets.len() != c {
        return Err(CoreError::shape(
            "offset_channels",
            format!("{} offsets for {c} channels", offsets.len()),
        ));
    }
    let mut out = x.data().to_vec();
    for ni in 0..n {
        for ci in 0..c {
            let off = offsets[ci];
            for v in &mut out[(ni * c + ci) * h * w..][..h * w] {
                *v += off;
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        Op::OffsetChannels(x.clone()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f32], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn conv_all_ones_counts_overlap() {
        // 3x3 ones, 3x3 ones kernel, padding 1: center sees 9 ones, corners 4.
        let x = t(&[1.0; 9], &[1, 1, 3, 3]);
        let w = t(&[1.0; 9], &[1, 1, 3, 3]);
        let b = t(&[0.0], &[1]);
        let y = conv2d(&x, &w, &b, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        let d = y.data();
        assert_eq!(d[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(d[corner], 4.0);
        }
        for edge in [1, 3, 5, 7] {
            assert_eq!(d[edge], 6.0);
        }
    }

    #[test]
    fn conv_zero_weight_yields_bias() {
        let x = t(&[0.3, -0.7, 1.2, 0.0], &[1, 1, 2, 2]);
        let w = t(&[0.0; 9], &[1, 1, 3, 3]);
        let b = t(&[0.25], &[1]);
        let y = conv2d(&x, &w, &b, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn conv_shape_errors_name_dimensions() {
        let x = t(&[0.0; 8], &[1, 2, 2, 2]);
        let w = t(&[0.0; 9], &[1, 1, 3, 3]);
        let b = t(&[0.0], &[1]);
        let err = conv2d(&x, &w, &b, 1).unwrap_err().to_string();
        assert!(err.contains("2 channels") && err.contains("1"), "{err}");

        let w_even = t(&[0.0; 8], &[1, 2, 2, 2]);
        let err = conv2d(&x, &w_even, &b, 1).unwrap_err().to_string();
        assert!(err.contains("odd"), "{err}");
    }

    #[test]
    fn relu_basics() {
        let y = relu(&t(&[-1.0, 0.0, 2.0], &[3]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let pos = t(&[0.5, 1.5], &[2]);
        assert_eq!(relu(&pos).data(), pos.data());
    }

    #[test]
    fn max_pool_single_window() {
        let y = max_pool2(&t(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2])).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn max_pool_constant_halves() {
        let y = max_pool2(&Tensor::full(&[1, 2, 4, 4], 0.7)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn max_pool_rejects_odd_dims() {
        let err = max_pool2(&Tensor::zeros(&[1, 1, 3, 4])).unwrap_err().to_string();
        assert!(err.contains("pad"), "{err}");
    }

    #[test]
    fn upsample_replicates_and_pool_inverts() {
        let y = nearest_upsample2(&t(&[1.0], &[1, 1, 1, 1])).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);

        let x = t(&[0.1, 0.9, -0.4, 0.2, 0.0, 0.5], &[1, 1, 2, 3]);
        let round = max_pool2(&nearest_upsample2(&x).unwrap()).unwrap();
        assert_eq!(round.data(), x.data());
    }

    #[test]
    fn pixel_shuffle_channel_major_layout() {
        let x = t(&[1.0, 2.0, 3.0, 4.0], &[1, 4, 1, 1]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        assert!(pixel_shuffle(&Tensor::zeros(&[1, 3, 2, 2]), 2).is_err());
        assert!(pixel_unshuffle(&Tensor::zeros(&[1, 1, 3, 2]), 2).is_err());
    }

    #[test]
    fn weight_norm_scales_to_g() {
        let v = t(&[3.0, 4.0], &[1, 2]);
        let g = t(&[10.0], &[1]);
        let w = weight_norm_resolve(&v, &g).unwrap();
        assert!((w.data()[0] - 6.0).abs() < 1e-6);
        assert!((w.data()[1] - 8.0).abs() < 1e-6);
    }

    #[test]
    fn weight_norm_identity_when_g_is_norm() {
        let v = t(&[0.6, -0.8, 1.0, 0.0], &[2, 2]);
        let g = t(&[1.0, 1.0], &[2]);
        let w = weight_norm_resolve(&v, &g).unwrap();
        assert!((w.data()[0] - 0.6).abs() < 1e-6);
        assert!((w.data()[1] + 0.8).abs() < 1e-6);
    }

    #[test]
    fn weight_norm_zero_channel_is_error() {
        let v = t(&[0.0, 0.0, 1.0, 1.0], &[2, 2]);
        let g = t(&[1.0, 1.0], &[2]);
        assert!(matches!(
            weight_norm_resolve(&v, &g),
            Err(CoreError::ZeroNormChannel(0))
        ));
    }

    #[test]
    fn losses_match_hand_values() {
        let p = t(&[0.5, 0.7], &[2]);
        let q = t(&[0.4, 0.9], &[2]);
        assert!((mae_loss(&p, &q).unwrap().item().unwrap() - 0.15).abs() < 1e-7);
        assert!((mse_loss(&p, &q).unwrap().item().unwrap() - 0.025).abs() < 1e-7);
        assert_eq!(mae_loss(&p, &p).unwrap().item().unwrap(), 0.0);
        assert_eq!(mse_loss(&p, &p).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn loss_shape_mismatch_is_error() {
        let p = t(&[0.0; 4], &[4]);
        let q = t(&[0.0; 2], &[2]);
        assert!(mae_loss(&p, &q).is_err());
        assert!(mse_loss(&p, &q).is_err());
    }

    #[test]
    fn offset_channels_shifts_per_channel() {
        let x = t(&[0.0, 0.0, 1.0, 1.0], &[1, 2, 1, 2]);
        let y = offset_channels(&x, &[0.5, -0.25]).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let x = t(&[-1.0, 2.0], &[1, 2, 1, 1]);
        let before = x.data().to_vec();
        let _ = relu(&x);
        let _ = offset_channels(&x, &[1.0, 1.0]).unwrap();
        let _ = add(&x, &x).unwrap();
        assert_eq!(x.data(), &before[..]);
    }
}
