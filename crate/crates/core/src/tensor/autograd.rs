//! Reverse-mode differentiation over the op graph.
//!
//! [`backward`] walks the graph in reverse topological order, propagating
//! gradients to every tracked parent. Gradients are deposited only into leaf
//! tensors created with `requires_grad = true`; intermediate gradients live
//! in a scratch map for the duration of the pass and the graph itself is
//! freed when the caller drops the loss tensor.

use std::collections::{HashMap, HashSet};

use super::ops::Op;
use super::Tensor;
use crate::error::{CoreError, Result};
use crate::parallel::for_each_chunk_mut;

/// Populate gradients of every reachable gradient-tracking leaf with
/// d(loss)/d(leaf). Repeated calls without zeroing accumulate.
pub fn backward(loss: &Tensor) -> Result<()> {
    if loss.len() != 1 {
        return Err(CoreError::NonScalarBackward(loss.shape().to_vec()));
    }
    if !loss.requires_grad() {
        return Err(CoreError::invalid(
            "backward",
            "loss does not depend on any gradient-tracking tensor",
        ));
    }
    let order = topo_order(loss);
    let mut grads: HashMap<usize, Vec<f32>> = HashMap::new();
    grads.insert(loss.node_id(), vec![1.0]);
    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.node_id()) else {
            continue;
        };
        propagate(node, g, &mut grads);
    }
    Ok(())
}

/// Post-order over the tracked subgraph: parents precede children.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut visited = HashSet::new();
    let mut order = Vec::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.node_id()) {
            continue;
        }
        stack.push((t.clone(), true));
        for p in t.op().parents() {
            if p.requires_grad() && !visited.contains(&p.node_id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

fn add_to(map: &mut HashMap<usize, Vec<f32>>, t: &Tensor, g: Vec<f32>) {
    if !t.requires_grad() {
        return;
    }
    match map.entry(t.node_id()) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            for (a, b) in e.get_mut().iter_mut().zip(&g) {
                *a += b;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(g);
        }
    }
}

fn propagate(node: &Tensor, g: Vec<f32>, map: &mut HashMap<usize, Vec<f32>>) {
    match node.op() {
        Op::Leaf => node.accumulate_grad(&g),
        Op::Add(a, b) => {
            if b.requires_grad() {
                add_to(map, b, g.clone());
            }
            add_to(map, a, g);
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                let ga = g.iter().zip(b.data()).map(|(&gi, &bi)| gi * bi).collect();
                add_to(map, a, ga);
            }
            if b.requires_grad() {
                let gb = g.iter().zip(a.data()).map(|(&gi, &ai)| gi * ai).collect();
                add_to(map, b, gb);
            }
        }
        Op::Relu(x) => {
            let gx = g
                .iter()
                .zip(x.data())
                .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                .collect();
            add_to(map, x, gx);
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            padding,
        } => {
            conv2d_backward(node, input, weight, bias, *padding, &g, map);
        }
        Op::MaxPool2 { input, argmax } => {
            let mut gx = vec![0.0f32; input.len()];
            for (o, &src) in argmax.iter().enumerate() {
                gx[src as usize] += g[o];
            }
            add_to(map, input, gx);
        }
        Op::NearestUp2(x) => {
            let s = x.shape();
            let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
            let ow = 2 * w;
            let mut gx = vec![0.0f32; x.len()];
            for p in 0..nc {
                let src = &g[p * 4 * h * w..][..4 * h * w];
                let dst = &mut gx[p * h * w..][..h * w];
                for y in 0..h {
                    for xw in 0..w {
                        dst[y * w + xw] = src[(2 * y) * ow + 2 * xw]
                            + src[(2 * y) * ow + 2 * xw + 1]
                            + src[(2 * y + 1) * ow + 2 * xw]
                            + src[(2 * y + 1) * ow + 2 * xw + 1];
                    }
                }
            }
            add_to(map, x, gx);
        }
        Op::PixelShuffle { input, r } => {
            // Inverse permutation: unshuffle the output gradient.
            let s = input.shape();
            let c_out = s[1] / (r * r);
            let gx = permute_unshuffle(s[0], c_out, s[2], s[3], *r, &g);
            add_to(map, input, gx);
        }
        Op::PixelUnshuffle { input, r } => {
            let s = node.shape();
            let c_out = s[1] / (r * r);
            let gx = permute_shuffle(s[0], c_out, s[2], s[3], *r, &g);
            add_to(map, input, gx);
        }
        Op::WeightNorm { v, g: gain, inv_norm } => {
            let cout = inv_norm.len();
            let per = v.len() / cout;
            let vd = v.data();
            let gd = gain.data();
            let mut gv = vec![0.0f32; v.len()];
            let mut gg = vec![0.0f32; cout];
            for c in 0..cout {
                let inv = inv_norm[c] as f64;
                let vs = &vd[c * per..][..per];
                let gs = &g[c * per..][..per];
                let dot: f64 = gs.iter().zip(vs).map(|(&a, &b)| a as f64 * b as f64).sum();
                gg[c] = (dot * inv) as f32;
                let k1 = gd[c] as f64 * inv;
                let k2 = gd[c] as f64 * inv * inv * inv * dot;
                for ((o, &gi), &vi) in gv[c * per..][..per].iter_mut().zip(gs).zip(vs) {
                    *o = (k1 * gi as f64 - k2 * vi as f64) as f32;
                }
            }
            if v.requires_grad() {
                add_to(map, v, gv);
            }
            if gain.requires_grad() {
                add_to(map, gain, gg);
            }
        }
        Op::Mae { pred, target } => {
            let scale = g[0] / pred.len() as f32;
            let diffs: Vec<f32> = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| {
                    if p > t {
                        scale
                    } else if p < t {
                        -scale
                    } else {
                        0.0
                    }
                })
                .collect();
            if target.requires_grad() {
                add_to(map, target, diffs.iter().map(|&d| -d).collect());
            }
            add_to(map, pred, diffs);
        }
        Op::Mse { pred, target } => {
            let scale = 2.0 * g[0] / pred.len() as f32;
            let diffs: Vec<f32> = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| scale * (p - t))
                .collect();
            if target.requires_grad() {
                add_to(map, target, diffs.iter().map(|&d| -d).collect());
            }
            add_to(map, pred, diffs);
        }
        Op::Sum(x) => {
            add_to(map, x, vec![g[0]; x.len()]);
        }
        Op::OffsetChannels(x) => {
            add_to(map, x, g);
        }
    }
}

/// out[n][c][h*r+i][w*r+j] = in[n][c*r*r + i*r + j][h][w], reading `src` in
/// the packed layout.
fn permute_shuffle(n: usize, c_out: usize, h: usize, w: usize, r: usize, src: &[f32]) -> Vec<f32> {
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f32; src.len()];
    for ni in 0..n {
        for c in 0..c_out {
            for i in 0..r {
                for j in 0..r {
                    let ch = c * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let lo = ((ni * c_out * r * r + ch) * h + y) * w + x;
                            let hi = ((ni * c_out + c) * oh + y * r + i) * ow + x * r + j;
                            out[hi] = src[lo];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`permute_shuffle`].
fn permute_unshuffle(n: usize, c_out: usize, h: usize, w: usize, r: usize, src: &[f32]) -> Vec<f32> {
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![0.0f32; src.len()];
    for ni in 0..n {
        for c in 0..c_out {
            for i in 0..r {
                for j in 0..r {
                    let ch = c * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let lo = ((ni * c_out * r * r + ch) * h + y) * w + x;
                            let hi = ((ni * c_out + c) * oh + y * r + i) * ow + x * r + j;
                            out[lo] = src[hi];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Dot product with eight fixed-order partial accumulators. The split lets
/// the autovectorizer use wide FMA lanes while keeping one deterministic
/// reduction order.
#[inline(always)]
fn dot_fixed(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let split = a.len() - a.len() % 8;
    for (ca, cb) in a[..split].chunks_exact(8).zip(b[..split].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut rem = 0.0f32;
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        rem += x * y;
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + rem
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    node: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    padding: usize,
    gout: &[f32],
    map: &mut HashMap<usize, Vec<f32>>,
) {
    let (n, cin, h, w) = {
        let s = input.shape();
        (s[0], s[1], s[2], s[3])
    };
    let (cout, kh, kw) = {
        let s = weight.shape();
        (s[0], s[2], s[3])
    };
    let (oh, ow) = {
        let s = node.shape();
        (s[2], s[3])
    };
    let x = input.data();
    let wt = weight.data();

    if bias.requires_grad() {
        let mut gb = vec![0.0f32; cout];
        for ni in 0..n {
            for co in 0..cout {
                let plane = &gout[(ni * cout + co) * oh * ow..][..oh * ow];
                gb[co] += plane.iter().sum::<f32>();
            }
        }
        add_to(map, bias, gb);
    }

    if weight.requires_grad() {
        let mut gw = vec![0.0f32; weight.len()];
        let per_co = cin * kh * kw;
        for_each_chunk_mut(&mut gw, per_co, |co, chunk| {
            for ci in 0..cin {
                for khi in 0..kh {
                    let oh_lo = padding.saturating_sub(khi);
                    let oh_hi = oh.min((h + padding).saturating_sub(khi));
                    for kwi in 0..kw {
                        let ow_lo = padding.saturating_sub(kwi);
                        let ow_hi = ow.min((w + padding).saturating_sub(kwi));
                        if ow_lo >= ow_hi || oh_lo >= oh_hi {
                            continue;
                        }
                        let mut acc = 0.0f32;
                        for ni in 0..n {
                            let g_plane = &gout[(ni * cout + co) * oh * ow..][..oh * ow];
                            let x_plane = &x[(ni * cin + ci) * h * w..][..h * w];
                            for ohi in oh_lo..oh_hi {
                                let ih = ohi + khi - padding;
                                let iw0 = ow_lo + kwi - padding;
                                let gs = &g_plane[ohi * ow + ow_lo..][..ow_hi - ow_lo];
                                let xs = &x_plane[ih * w + iw0..][..ow_hi - ow_lo];
                                acc += dot_fixed(gs, xs);
                            }
                        }
                        chunk[(ci * kh + khi) * kw + kwi] = acc;
                    }
                }
            }
        });
        add_to(map, weight, gw);
    }

    if input.requires_grad() {
        let mut gx = vec![0.0f32; input.len()];
        for_each_chunk_mut(&mut gx, h * w, |plane_idx, plane| {
            let ni = plane_idx / cin;
            let ci = plane_idx % cin;
            for co in 0..cout {
                let g_plane = &gout[(ni * cout + co) * oh * ow..][..oh * ow];
                for khi in 0..kh {
                    let ih_lo = khi.saturating_sub(padding);
                    let ih_hi = h.min((oh + khi).saturating_sub(padding));
                    for kwi in 0..kw {
                        let wgt = wt[((co * cin + ci) * kh + khi) * kw + kwi];
                        let iw_lo = kwi.saturating_sub(padding);
                        let iw_hi = w.min((ow + kwi).saturating_sub(padding));
                        if iw_lo >= iw_hi {
                            continue;
                        }
                        for ih in ih_lo..ih_hi {
                            let oh_pos = ih + padding - khi;
                            let ow0 = iw_lo + padding - kwi;
                            let gs = &g_plane[oh_pos * ow + ow0..][..iw_hi - iw_lo];
                            let dst = &mut plane[ih * w + iw_lo..][..iw_hi - iw_lo];
                            for (d, gv) in dst.iter_mut().zip(gs) {
                                *d += wgt * gv;
                            }
                        }
                    }
                }
            }
        });
        add_to(map, input, gx);
    }
}

#[cfg(test)]
mod tests {
    use super::super::ops::{add, conv2d, mae_loss, relu, sum};
    use super::*;

    #[test]
    fn sum_grad_is_ones() {
        let x = Tensor::leaf_with_grad(vec![0.3, -0.2, 1.0], &[3]).unwrap();
        let loss = sum(&x);
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_grad_is_indicator() {
        let x = Tensor::leaf_with_grad(vec![-1.0, 2.0], &[2]).unwrap();
        let loss = sum(&relu(&x));
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_error() {
        let x = Tensor::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            backward(&relu(&x)),
            Err(CoreError::NonScalarBackward(_))
        ));
    }

    #[test]
    fn untracked_loss_is_error() {
        let x = Tensor::from_vec(vec![1.0], &[1]).unwrap();
        assert!(backward(&x).is_err());
    }

    #[test]
    fn frozen_tensor_gets_no_grad() {
        let frozen = Tensor::from_vec(vec![2.0, 3.0], &[2]).unwrap();
        let live = Tensor::leaf_with_grad(vec![1.0, 1.0], &[2]).unwrap();
        let loss = sum(&add(&frozen, &live).unwrap());
        backward(&loss).unwrap();
        assert!(frozen.grad().is_none());
        assert_eq!(live.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::leaf_with_grad(vec![1.0], &[1]).unwrap();
        let loss = sum(&x);
        backward(&loss).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn shared_input_grads_sum() {
        let x = Tensor::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        let loss = sum(&add(&x, &x).unwrap());
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn conv_relu_mae_chain_runs() {
        let x = Tensor::from_vec(vec![0.5; 16], &[1, 1, 4, 4]).unwrap();
        let w = Tensor::leaf_with_grad(vec![0.1; 9], &[1, 1, 3, 3]).unwrap();
        let b = Tensor::leaf_with_grad(vec![0.0], &[1]).unwrap();
        let t = Tensor::from_vec(vec![0.2; 16], &[1, 1, 4, 4]).unwrap();
        let y = relu(&conv2d(&x, &w, &b, 1).unwrap());
        let loss = mae_loss(&y, &t).unwrap();
        backward(&loss).unwrap();
        assert!(w.grad().is_some());
        assert!(b.grad().is_some());
        assert!(x.grad().is_none());
    }
}
