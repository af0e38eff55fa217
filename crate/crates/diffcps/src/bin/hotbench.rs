use std::time::Instant;

use diffcps::diffusion::{DiffusionPolicy, NoiseSchedule};
use diffcps::nn::matrix::{gemm_acc_slices, Matrix};
use diffcps::nn::mlp::{Mlp, Parameterized};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn timeit(name: &str, reps: usize, mut f: impl FnMut()) {
    f();
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    println!("{name}: {:.3} ms/call", t.elapsed().as_secs_f64() * 1e3 / reps as f64);
}

fn main() {
    let mut rng = StdRng::seed_from_u64(1);
    let net = Mlp::new(&[19, 256, 256, 256, 2], &mut rng);
    let x = Matrix::from_fn(256, 19, |r, c| ((r * 19 + c) as f64 * 0.01).sin());

    // raw kernel on the dominant shape
    let a = Matrix::from_fn(256, 256, |r, c| ((r + c) as f64 * 0.001).sin());
    let b = Matrix::from_fn(256, 256, |r, c| ((r * 2 + c) as f64 * 0.002).cos());
    let mut c = Matrix::zeros(256, 256);
    timeit("gemm 256^3", 50, || {
        gemm_acc_slices(c.as_mut_slice(), a.as_slice(), b.as_slice(), 256, 256, 256);
    });

    timeit("forward_only", 20, || {
        let _ = net.forward_only(&x);
    });
    timeit("forward(cached)", 20, || {
        let _ = net.forward(&x);
    });
    let (y, cache) = net.forward(&x);
    let dy = Matrix::from_fn(256, 2, |_, _| 0.01);
    let mut net2 = net.clone();
    timeit("backward", 20, || {
        net2.zero_grad();
        let _ = net2.backward(&cache, &dy);
    });
    timeit("input_gradient", 20, || {
        let _ = net.input_gradient(&cache, &dy);
    });

    let sched = NoiseSchedule::vp(5, 0.1, 10.0).unwrap();
    let policy = DiffusionPolicy::new(1, 2, &[256, 256, 256], sched, &mut rng);
    let states = Matrix::zeros(256, 1);
    timeit("sample_batch T=5", 10, || {
        let mut r = StdRng::seed_from_u64(3);
        let _ = policy.sample_batch(&states, &mut r);
    });
    let mut policy2 = policy.clone();
    timeit("traced+backward T=5", 10, || {
        let mut r = StdRng::seed_from_u64(3);
        let (_, trace) = policy2.sample_batch_traced(&states, &mut r);
        let d = Matrix::from_fn(256, 2, |_, _| 0.01);
        policy2.zero_grad();
        policy2.chain_backward(&trace, &d);
    });
    let actions = Matrix::from_fn(256, 2, |r, d| ((r + d) as f64 * 0.1).sin() * 0.9);
    timeit("ddpm_loss_grad", 10, || {
        let mut r = StdRng::seed_from_u64(4);
        policy2.zero_grad();
        let _ = policy2.ddpm_loss_grad(&states, &actions, 1.0, &mut r);
    });
    let _ = y;
}
