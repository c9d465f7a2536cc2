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

fn main() {
    let mut rng = SeededRng::new(1);
    // Typical fine-tune shape: batch 8, 16->64 channels, 48x48, 3x3 kernel.
    let x = t_rand(&mut rng, &[8, 16, 48, 48], true);
    let w = t_rand(&mut rng, &[64, 16, 3, 3], true);
    let b = t_rand(&mut rng, &[64], true);
    let target = t_rand(&mut rng, &[8, 64, 48, 48], false);

    let macs = 8.0 * 64.0 * 16.0 * 9.0 * 48.0 * 48.0;

    // Forward only.
    let start = Instant::now();
    let reps = 30;
    for _ in 0..reps {
        let y = conv2d(&x, &w, &b, 1).unwrap();
        std::hint::black_box(y.data()[0]);
    }
    let dt = start.elapsed().as_secs_f64() / reps as f64;
    println!("conv fwd : {:.1} ms  {:.2} GMAC/s", dt * 1e3, macs / dt / 1e9);

    // Forward + backward through conv+relu+mae.
    let start = Instant::now();
    for _ in 0..reps {
        let y = relu(&conv2d(&x, &w, &b, 1).unwrap());
        let loss = mae_loss(&y, &target).unwrap();
        backward(&loss).unwrap();
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
    }
    let dt = start.elapsed().as_secs_f64() / reps as f64;
    println!(
        "fwd+bwd  : {:.1} ms  {:.2} GMAC/s (3x fwd work assumed)",
        dt * 1e3,
        3.0 * macs / dt / 1e9
    );
}
