use nsrkit_core::rng::SeededRng;
use nsrkit_core::tensor::{backward, conv2d, mul, sum, Tensor};

fn main() {
    for (n, cin, cout, k, h, w, pad) in [
        (1usize, 1usize, 1usize, 3usize, 4usize, 4usize, 1usize),
        (1, 1, 1, 3, 4, 4, 0),
        (1, 2, 2, 3, 5, 5, 1),
        (2, 1, 1, 1, 3, 3, 1),
        (1, 1, 1, 1, 3, 3, 0),
        (1, 1, 2, 5, 6, 6, 2),
        (1, 3, 1, 3, 6, 4, 1),
    ] {
        let mut rng = SeededRng::new(42);
        let mut rnd = |len: usize| -> Vec<f32> {
            (0..len).map(|_| rng.uniform_f32() * 2.0 - 1.0).collect()
        };
        let x = Tensor::leaf_with_grad(rnd(n * cin * h * w), &[n, cin, h, w]).unwrap();
        let wt = Tensor::leaf_with_grad(rnd(cout * cin * k * k), &[cout, cin, k, k]).unwrap();
        let b = Tensor::leaf_with_grad(rnd(cout), &[cout]).unwrap();
        let out = conv2d(&x, &wt, &b, pad).unwrap();
        let r_data = rnd(out.len()).iter().map(|v| v.abs() + 0.5).collect::<Vec<_>>();
        let r = Tensor::from_vec(r_data.clone(), out.shape()).unwrap();
        let loss = sum(&mul(&out, &r).unwrap());
        backward(&loss).unwrap();

        let weighted = |xt: &Tensor, wt2: &Tensor, bt: &Tensor| -> f64 {
            conv2d(xt, wt2, bt, pad)
                .unwrap()
                .data()
                .iter()
                .zip(&r_data)
                .map(|(&o, &w)| o as f64 * w as f64)
                .sum()
        };

        let hstep = 1e-3f32;
        let mut worst = (0.0f64, "", 0usize);
        for (name, t) in [("input", &x), ("weight", &wt), ("bias", &b)] {
            let grad = t.grad().unwrap();
            for e in 0..t.len() {
                let mut probe = |d: f32| {
                    let mut data = t.data().to_vec();
                    data[e] += d;
                    let tt = Tensor::from_vec(data, t.shape()).unwrap();
                    match name {
                        "input" => weighted(&tt, &wt, &b),
                        "weight" => weighted(&x, &tt, &b),
                        _ => weighted(&x, &wt, &tt),
                    }
                };
                let fd = (probe(hstep) - probe(-hstep)) / (2e-3);
                let g = grad[e] as f64;
                let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
                if rel > worst.0 {
                    worst = (rel, name, e);
                }
            }
        }
        println!(
            "n{n} cin{cin} cout{cout} k{k} {h}x{w} pad{pad}: worst rel {:.2e} ({} elem {})",
            worst.0, worst.1, worst.2
        );
    }
}
