use std::time::Instant;

use nsrkit_core::rng::SeededRng;
use nsrkit_core::tensor::{backward, conv2d, mae_loss, relu, Tensor};

fn t_rand(rng: &mut SeededRng, shape: &[usize], grad: bool) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.uniform_f32() - 0.5).collect();
    if grad {
        Tensor::leaf_with_grad(data, shape).unwrap()
    } else {
        Tensor::from_vec(data, shape).unwrap()
    }
}

fn bench(name: &str, x_grad: bool, w_grad: bool, with_relu_mae: bool) {
    let mut rng = SeededRng::new(1);
    let x = t_rand(&mut rng, &[8, 16, 48, 48], x_grad);
    let w = t_rand(&mut rng, &[64, 16, 3, 3], w_grad);
    let b = t_rand(&mut rng, &[64], w_grad);
    let target = t_rand(&mut rng, &[8, 64, 48, 48], false);
    let reps = 20;
    let start = Instant::now();
    for _ in 0..reps {
        let y = conv2d(&x, &w, &b, 1).unwrap();
        if with_relu_mae {
            let loss = mae_loss(&relu(&y), &target).unwrap();
            if x_grad || w_grad {
                backward(&loss).unwrap();
            }
            std::hint::black_box(loss.item().unwrap());
        } else if x_grad || w_grad {
            let loss = nsrkit_core::tensor::sum(&y);
            backward(&loss).unwrap();
        }
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
    }
    println!("{name}: {:.1} ms", start.elapsed().as_secs_f64() * 1e3 / reps as f64);
}

fn main() {
    bench("fwd only           ", false, false, false);
    bench("fwd+relu+mae only  ", false, false, true);
    bench("fwd + gin          ", true, false, false);
    bench("fwd + gw           ", false, true, false);
    bench("full conv+relu+mae ", true, true, true);
}
