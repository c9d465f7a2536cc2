//! Central finite-difference verification of the autodiff engine.
//!
//! Per operation, two fully independent routes are compared:
//!
//! * engine route — f32 forward plus reverse-mode backward, scalarized as
//!   `sum(mul(F(x), r))` for a random positive weight vector `r`;
//! * oracle route — central differences (h = 1e-3) of the same weighted sum,
//!   evaluated with the f64 naive reference implementations from
//!   [`crate::oracles`], which share no code with the engine kernels.
//!
//! Evaluating the difference quotient in f64 keeps it free of f32 rounding,
//! so every gradient element can be checked at the 1e-3 tolerance. Inputs
//! are conditioned away from non-differentiable points (ReLU kinks, pooling
//! ties, MAE equalities) where a difference quotient is not a valid oracle.
//!
//! The composite check mirrors the whole WDSR-tiny graph (weight-normalized
//! convs, residual blocks, pixel shuffles, mean offsets, MAE loss) in f64
//! and differentiates that, which verifies the model wiring and the engine
//! backward in one shot. ReLU/MAE kinks inside a stencil are detected by a
//! two-stencil (h, h/2) consistency test and skipped; the skip count is
//! bounded by the caller.

use std::collections::BTreeMap;

use nsrkit_core::denoise::DenoiserSpec;
use nsrkit_core::imaging::{image_to_tensor, ImageF};
use nsrkit_core::rng::SeededRng;
use nsrkit_core::sr::{SrConfig, SrModel, SrVariant};
use nsrkit_core::tensor::{
    add, backward, conv2d, mae_loss, max_pool2, mse_loss, mul, nearest_upsample2,
    offset_channels, pixel_shuffle, pixel_unshuffle, relu, sum, weight_norm_resolve, Tensor,
};

use crate::gen;
use crate::oracles::{
    conv2d_naive, max_pool2_naive, pixel_shuffle_naive, pixel_unshuffle_naive, to_f64,
    weight_norm_naive,
};

pub const FD_H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub elements: usize,
}

/// Check every tracked input's gradient of `sum(r * F(inputs))`. The engine
/// side runs `eval_engine` + backward; the finite-difference side perturbs
/// f64 copies of the inputs and re-evaluates `eval_ref`.
fn check_op<E, R>(
    name: &'static str,
    inputs: &[Tensor],
    eval_engine: E,
    eval_ref: R,
    rng: &mut SeededRng,
) -> OpCheck
where
    E: Fn(&[Tensor]) -> Tensor,
    R: Fn(&[Vec<f64>]) -> Vec<f64>,
{
    for t in inputs {
        t.zero_grad();
    }
    let out = eval_engine(inputs);
    let r_data = gen::uniform_vec(rng, out.len(), 0.5, 1.5);
    let r = Tensor::from_vec(r_data.clone(), out.shape()).unwrap();
    let loss = sum(&mul(&out, &r).unwrap());
    backward(&loss).unwrap();

    let inputs64: Vec<Vec<f64>> = inputs.iter().map(|t| to_f64(t.data())).collect();

    // The two routes must agree on the forward value before derivatives
    // mean anything.
    let ref_out = eval_ref(&inputs64);
    let fwd_err = out
        .data()
        .iter()
        .zip(&ref_out)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        fwd_err <= 1e-4,
        "{name}: engine forward disagrees with f64 reference by {fwd_err:.3e}"
    );

    let weighted = |tensors: &[Vec<f64>]| -> f64 {
        eval_ref(tensors)
            .iter()
            .zip(&r_data)
            .map(|(&o, &w)| o * w as f64)
            .sum()
    };

    let mut check = OpCheck {
        name,
        max_rel_err: 0.0,
        elements: 0,
    };
    for (ti, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        let grad = t.grad().expect("tracked input received a gradient");
        for e in 0..t.len() {
            let mut probe = |delta: f64| -> f64 {
                let mut tensors = inputs64.clone();
                tensors[ti][e] += delta;
                weighted(&tensors)
            };
            let fd = (probe(FD_H) - probe(-FD_H)) / (2.0 * FD_H);
            check.max_rel_err = check.max_rel_err.max(rel_err(fd, grad[e] as f64));
            check.elements += 1;
        }
    }
    check
}

fn merge(agg: &mut Vec<OpCheck>, c: OpCheck) {
    match agg.iter_mut().find(|x| x.name == c.name) {
        Some(x) => {
            x.max_rel_err = x.max_rel_err.max(c.max_rel_err);
            x.elements += c.elements;
        }
        None => agg.push(c),
    }
}

fn ref_relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn ref_up2(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let ow = 2 * w;
    let mut out = vec![0.0f64; 4 * x.len()];
    for p in 0..n * c {
        for y in 0..h {
            for xx in 0..w {
                let v = x[p * h * w + y * w + xx];
                let base = p * 4 * h * w;
                out[base + (2 * y) * ow + 2 * xx] = v;
                out[base + (2 * y) * ow + 2 * xx + 1] = v;
                out[base + (2 * y + 1) * ow + 2 * xx] = v;
                out[base + (2 * y + 1) * ow + 2 * xx + 1] = v;
            }
        }
    }
    out
}

/// A 4-D tensor whose every 2x2 pooling window has pairwise distinct values
/// (separation >= 5 * FD_H), so pooling argmaxes cannot flip under probing.
fn pool_safe_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let (h, w) = (shape[2], shape[3]);
    loop {
        let t = gen::tensor(rng, shape, -1.0, 1.0);
        let data = t.data();
        let planes = shape[0] * shape[1];
        let mut ok = true;
        'scan: for p in 0..planes {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let mut vals = [0f32; 4];
                    for dy in 0..2 {
                        for dx in 0..2 {
                            vals[dy * 2 + dx] = data[p * h * w + (2 * oy + dy) * w + 2 * ox + dx];
                        }
                    }
                    for i in 0..4 {
                        for j in i + 1..4 {
                            if (vals[i] - vals[j]).abs() < 5.0 * FD_H as f32 {
                                ok = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if ok {
            return t;
        }
    }
}

/// One randomized instance of every differentiable op.
pub fn check_all_ops_once(rng: &mut SeededRng, agg: &mut Vec<OpCheck>) {
    let dims = |rng: &mut SeededRng| {
        (
            1 + rng.below(2),
            1 + rng.below(3),
            2 + 2 * rng.below(3),
            2 + 2 * rng.below(3),
        )
    };

    // add / mul
    {
        let (n, c, h, w) = dims(rng);
        let a = gen::grad_tensor(rng, &[n, c, h, w], 0.05, 1.0);
        let b = gen::grad_tensor(rng, &[n, c, h, w], 0.05, 1.0);
        merge(
            agg,
            check_op(
                "add",
                &[a.clone(), b.clone()],
                |t| add(&t[0], &t[1]).unwrap(),
                |t| t[0].iter().zip(&t[1]).map(|(x, y)| x + y).collect(),
                rng,
            ),
        );
        merge(
            agg,
            check_op(
                "mul",
                &[a, b],
                |t| mul(&t[0], &t[1]).unwrap(),
                |t| t[0].iter().zip(&t[1]).map(|(x, y)| x * y).collect(),
                rng,
            ),
        );
    }
    // relu: inputs kept away from the kink at 0.
    {
        let (n, c, h, w) = dims(rng);
        let x = gen::grad_tensor(rng, &[n, c, h, w], 0.05, 1.0);
        merge(
            agg,
            check_op("relu", &[x], |t| relu(&t[0]), |t| ref_relu(&t[0]), rng),
        );
    }
    // conv2d: gradient w.r.t. input, weight and bias.
    {
        let n = 1 + rng.below(2);
        let cin = 1 + rng.below(3);
        let cout = 1 + rng.below(3);
        let k = [1, 3][rng.below(2)];
        let (h, w) = (3 + rng.below(4), 3 + rng.below(4));
        let pad = rng.below(2);
        let x = gen::grad_tensor(rng, &[n, cin, h, w], 0.0, 1.0);
        let wt = gen::grad_tensor(rng, &[cout, cin, k, k], 0.0, 1.0);
        let b = gen::grad_tensor(rng, &[cout], 0.0, 0.5);
        merge(
            agg,
            check_op(
                "conv2d",
                &[x, wt, b],
                move |t| conv2d(&t[0], &t[1], &t[2], pad).unwrap(),
                move |t| conv2d_naive(&t[0], &t[1], &t[2], n, cin, h, w, cout, k, k, pad),
                rng,
            ),
        );
    }
    // max_pool2: windows conditioned against ties.
    {
        let (n, c) = (1 + rng.below(2), 1 + rng.below(2));
        let (h, w) = (2 + 2 * rng.below(3), 2 + 2 * rng.below(3));
        let base = pool_safe_tensor(rng, &[n, c, h, w]);
        let x = Tensor::leaf_with_grad(base.data().to_vec(), base.shape()).unwrap();
        merge(
            agg,
            check_op(
                "max_pool2",
                &[x],
                |t| max_pool2(&t[0]).unwrap(),
                move |t| max_pool2_naive(&t[0], n, c, h, w),
                rng,
            ),
        );
    }
    // nearest_upsample2 / pixel_shuffle / pixel_unshuffle: index maps.
    {
        let (n, c, h, w) = dims(rng);
        let x = gen::grad_tensor(rng, &[n, c, h, w], 0.05, 1.0);
        merge(
            agg,
            check_op(
                "nearest_upsample2",
                &[x],
                |t| nearest_upsample2(&t[0]).unwrap(),
                move |t| ref_up2(&t[0], n, c, h, w),
                rng,
            ),
        );

        let r = 1 + rng.below(2);
        let xs = gen::grad_tensor(rng, &[n, c * r * r, h, w], 0.05, 1.0);
        merge(
            agg,
            check_op(
                "pixel_shuffle",
                &[xs],
                move |t| pixel_shuffle(&t[0], r).unwrap(),
                move |t| pixel_shuffle_naive(&t[0], n, c * r * r, h, w, r),
                rng,
            ),
        );

        let xu = gen::grad_tensor(rng, &[n, c, h * r, w * r], 0.05, 1.0);
        merge(
            agg,
            check_op(
                "pixel_unshuffle",
                &[xu],
                move |t| pixel_unshuffle(&t[0], r).unwrap(),
                move |t| pixel_unshuffle_naive(&t[0], n, c, h * r, w * r, r),
                rng,
            ),
        );
    }
    // weight_norm_resolve: v magnitudes bounded away from zero norm.
    {
        let cout = 1 + rng.below(3);
        let per = 2 + rng.below(6);
        let v = gen::grad_tensor(rng, &[cout, per], 0.3, 1.0);
        let g = gen::grad_tensor(rng, &[cout], 0.5, 1.5);
        merge(
            agg,
            check_op(
                "weight_norm",
                &[v, g],
                |t| weight_norm_resolve(&t[0], &t[1]).unwrap(),
                move |t| weight_norm_naive(&t[0], &t[1], cout),
                rng,
            ),
        );
    }
    // mae / mse: |pred - target| bounded away from the MAE kink.
    {
        let (n, c, h, w) = dims(rng);
        let len = n * c * h * w;
        let pred_data = gen::uniform_vec(rng, len, -1.0, 1.0);
        let target_data: Vec<f32> = pred_data
            .iter()
            .map(|&p| {
                let off = 0.1 + 0.4 * rng.uniform_f32();
                if rng.uniform() < 0.5 {
                    p - off
                } else {
                    p + off
                }
            })
            .collect();
        let shape = [n, c, h, w];
        let pred = Tensor::leaf_with_grad(pred_data.clone(), &shape).unwrap();
        let target = Tensor::from_vec(target_data.clone(), &shape).unwrap();
        merge(
            agg,
            check_op(
                "mae_loss",
                &[pred, target.clone()],
                |t| mae_loss(&t[0], &t[1]).unwrap(),
                |t| {
                    let m = t[0].iter().zip(&t[1]).map(|(p, q)| (p - q).abs()).sum::<f64>()
                        / t[0].len() as f64;
                    vec![m]
                },
                rng,
            ),
        );
        let pred2 = Tensor::leaf_with_grad(pred_data, &shape).unwrap();
        merge(
            agg,
            check_op(
                "mse_loss",
                &[pred2, target],
                |t| mse_loss(&t[0], &t[1]).unwrap(),
                |t| {
                    let m = t[0]
                        .iter()
                        .zip(&t[1])
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        / t[0].len() as f64;
                    vec![m]
                },
                rng,
            ),
        );
    }
    // sum / offset_channels
    {
        let (n, c, h, w) = dims(rng);
        let x = gen::grad_tensor(rng, &[n, c, h, w], 0.05, 1.0);
        merge(
            agg,
            check_op("sum", &[x.clone()], |t| sum(&t[0]), |t| vec![t[0].iter().sum()], rng),
        );
        let offsets = gen::uniform_vec(rng, c, -0.5, 0.5);
        let offsets_ref = offsets.clone();
        merge(
            agg,
            check_op(
                "offset_channels",
                &[x],
                move |t| offset_channels(&t[0], &offsets).unwrap(),
                move |t| {
                    let mut out = t[0].clone();
                    for ni in 0..n {
                        for ci in 0..c {
                            for v in &mut out[(ni * c + ci) * h * w..][..h * w] {
                                *v += offsets_ref[ci] as f64;
                            }
                        }
                    }
                    out
                },
                rng,
            ),
        );
    }
}

/// Run `instances` randomized rounds over every differentiable op.
pub fn check_all_ops(instances: usize, seed: u64) -> Vec<OpCheck> {
    let mut rng = SeededRng::new(seed);
    let mut agg = Vec::new();
    for _ in 0..instances {
        check_all_ops_once(&mut rng, &mut agg);
    }
    agg
}

/// f64 mirror of the WDSR forward pass plus MAE loss, evaluated from a
/// name-keyed parameter table.
struct RefWdsr {
    params: BTreeMap<String, Vec<f64>>,
    blocks: usize,
    filters: usize,
    expansion: usize,
    scale: usize,
    rgb_mean: [f64; 3],
}

impl RefWdsr {
    fn from_model(model: &SrModel) -> RefWdsr {
        let params = model
            .params()
            .iter()
            .map(|p| (p.name().to_string(), to_f64(p.value().data())))
            .collect();
        let c = model.config();
        RefWdsr {
            params,
            blocks: c.blocks,
            filters: c.filters,
            expansion: c.expansion,
            scale: c.scale,
            rgb_mean: [
                c.rgb_mean[0] as f64,
                c.rgb_mean[1] as f64,
                c.rgb_mean[2] as f64,
            ],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &self,
        prefix: &str,
        x: &[f64],
        cin: usize,
        h: usize,
        w: usize,
        cout: usize,
        k: usize,
        pad: usize,
    ) -> Vec<f64> {
        let v = &self.params[&format!("{prefix}.v")];
        let g = &self.params[&format!("{prefix}.g")];
        let b = &self.params[&format!("{prefix}.b")];
        let kernel = weight_norm_naive(v, g, cout);
        conv2d_naive(x, &kernel, b, 1, cin, h, w, cout, k, k, pad)
    }

    /// Forward for one 3-channel image of size h x w; returns the upscaled
    /// prediction.
    fn forward(&self, img: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (f, s) = (self.filters, self.scale);
        let mut x = img.to_vec();
        for c in 0..3 {
            for v in &mut x[c * h * w..][..h * w] {
                *v -= self.rgb_mean[c];
            }
        }
        let mut body = self.conv("head", &x, 3, h, w, f, 3, 1);
        for i in 0..self.blocks {
            let wide = ref_relu(&self.conv(
                &format!("body.block{i}.conv1"),
                &body,
                f,
                h,
                w,
                self.expansion * f,
                3,
                1,
            ));
            let narrow = self.conv(
                &format!("body.block{i}.conv2"),
                &wide,
                self.expansion * f,
                h,
                w,
                f,
                3,
                1,
            );
            for (b, n) in body.iter_mut().zip(&narrow) {
                *b += n;
            }
        }
        let main = pixel_shuffle_naive(
            &self.conv("tail", &body, f, h, w, 3 * s * s, 3, 1),
            1,
            3 * s * s,
            h,
            w,
            s,
        );
        let skip = pixel_shuffle_naive(
            &self.conv("skip", &x, 3, h, w, 3 * s * s, 5, 2),
            1,
            3 * s * s,
            h,
            w,
            s,
        );
        let (oh, ow) = (h * s, w * s);
        let mut out: Vec<f64> = main.iter().zip(&skip).map(|(a, b)| a + b).collect();
        for c in 0..3 {
            for v in &mut out[c * oh * ow..][..oh * ow] {
                *v += self.rgb_mean[c];
            }
        }
        out
    }

    fn mae(&self, img: &[f64], h: usize, w: usize, target: &[f64]) -> f64 {
        let pred = self.forward(img, h, w);
        pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
    }
}

#[derive(Debug, Default)]
pub struct CompositeCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    pub instances: usize,
}

impl CompositeCheck {
    pub fn summary(&self) -> String {
        format!(
            "max rel err {:.2e} over {} elements ({} kink-skipped, {} instances)",
            self.max_rel_err, self.checked, self.skipped, self.instances
        )
    }
}

/// Finite-difference check of the full WDSR-tiny graph (head, one residual
/// block, tail, skip, pixel shuffles, weight norm everywhere) under MAE loss.
pub fn check_wdsr_tiny(instances: usize, seed: u64) -> CompositeCheck {
    let mut rng = SeededRng::new(seed);
    let mut report = CompositeCheck {
        instances,
        ..Default::default()
    };

    for inst in 0..instances {
        let config = SrConfig::new(
            2,
            1,
            4,
            2,
            SrVariant::Baseline,
            DenoiserSpec::identity(),
            [0.4, 0.45, 0.5],
        )
        .unwrap();
        let model = SrModel::init(config, seed ^ (inst as u64 + 1)).unwrap();
        let img = gen::image(&mut rng, 6, 6);
        let x = image_to_tensor(&img);
        // Keep every |pred - target| well away from the MAE kink so the
        // subgradient sign pattern is unambiguous on both routes.
        let pred0 = model.forward_baseline(&x).unwrap();
        let target_data: Vec<f32> = pred0
            .data()
            .iter()
            .map(|&p| {
                let off = 0.1 + 0.4 * rng.uniform_f32();
                if rng.uniform() < 0.5 {
                    p - off
                } else {
                    p + off
                }
            })
            .collect();
        let target = Tensor::from_vec(target_data, &[1, 3, 12, 12]).unwrap();

        let loss = mae_loss(&model.forward_baseline(&x).unwrap(), &target).unwrap();
        backward(&loss).unwrap();
        let grads: Vec<(String, Vec<f32>)> = model
            .params()
            .iter()
            .map(|p| (p.name().to_string(), p.value().take_grad().unwrap()))
            .collect();

        let mut reference = RefWdsr::from_model(&model);
        let img64 = to_f64(x.data());
        let target64 = to_f64(target.data());

        // The f64 rewiring must reproduce the engine's loss before its
        // derivatives are used as the oracle.
        let ref_loss = reference.mae(&img64, 6, 6, &target64);
        assert!(
            (ref_loss - loss.item().unwrap() as f64).abs() <= 1e-5,
            "f64 reference wiring disagrees with the engine: {ref_loss} vs {}",
            loss.item().unwrap()
        );

        for (name, grad) in &grads {
            let gmax = grad.iter().fold(0.0f32, |m, &g| m.max(g.abs()));
            if gmax == 0.0 {
                continue;
            }
            // Largest-|g| elements carry the signal; wiring bugs distort
            // them first.
            let mut order: Vec<usize> = (0..grad.len()).collect();
            order.sort_by(|&a, &b| grad[b].abs().partial_cmp(&grad[a].abs()).unwrap());
            let picks: Vec<usize> = order
                .into_iter()
                .filter(|&e| grad[e].abs() >= (0.05 * gmax).max(1e-4))
                .take(4)
                .collect();

            for e in picks {
                let mut probe = |delta: f64| -> f64 {
                    let slot = reference.params.get_mut(name).unwrap();
                    let old = slot[e];
                    slot[e] = old + delta;
                    let l = reference.mae(&img64, 6, 6, &target64);
                    reference.params.get_mut(name).unwrap()[e] = old;
                    l
                };
                let fd1 = (probe(FD_H) - probe(-FD_H)) / (2.0 * FD_H);
                let fd2 = (probe(FD_H / 2.0) - probe(-FD_H / 2.0)) / FD_H;
                // A ReLU or MAE kink inside the stencil makes the halved
                // step disagree; those evaluations are not valid oracles.
                if (fd1 - fd2).abs() > (1e-3 * fd1.abs().max(fd2.abs())).max(1e-7) {
                    report.skipped += 1;
                    continue;
                }
                report.max_rel_err = report.max_rel_err.max(rel_err(fd1, grad[e] as f64));
                report.checked += 1;
            }
        }
    }
    report
}
