use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::gradcheck::{check_gradients, sample_coords, GradCheckSettings};

use super::matrix::Matrix;
use super::mlp::{Mlp, Parameterized, ParamTensor};
use super::optim::{adam_step, polyak_update, AdamState};

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

#[test]
fn zero_weight_net_maps_anything_to_zero() {
    let net = Mlp::zeros(&[3, 8, 8, 2]);
    let y = net.forward_one(&[1.0, -2.0, 0.5]);
    assert_eq!(y, vec![0.0, 0.0]);
}

#[test]
fn identity_like_net_computes_mish_of_input() {
    // One hidden unit with w=1, b=0 and an identity output layer: the network
    // output is mish(x). Oracle: independent scalar evaluation of
    // x * tanh(ln(1 + e^x)).
    let mut net = Mlp::zeros(&[1, 1, 1]);
    net.layers_mut()[0].weight.values_mut()[0] = 1.0;
    net.layers_mut()[1].weight.values_mut()[0] = 1.0;
    let y = net.forward_one(&[2.0])[0];
    let oracle = 2.0_f64 * (1.0_f64 + 2.0_f64.exp()).ln().tanh();
    assert!((y - oracle).abs() < 1e-12, "got {y}, oracle {oracle}");
    assert!((y - 1.9440).abs() < 1e-4);
}

#[test]
fn single_linear_layer_is_an_affine_map() {
    let mut net = Mlp::zeros(&[1, 1]);
    net.layers_mut()[0].weight.values_mut()[0] = 2.0;
    net.layers_mut()[0].bias.values_mut()[0] = 1.0;
    assert_eq!(net.forward_one(&[3.0]), vec![7.0]);
}

#[test]
fn forward_is_deterministic() {
    let net = Mlp::new(&[4, 16, 16, 3], &mut rng(11));
    let x = Matrix::from_fn(5, 4, |r, c| (r as f64) - (c as f64) * 0.3);
    assert_eq!(net.forward_only(&x), net.forward_only(&x));
}

#[test]
#[should_panic(expected = "input dimension mismatch")]
fn forward_rejects_wrong_input_width() {
    let net = Mlp::zeros(&[3, 4, 2]);
    net.forward_only(&Matrix::zeros(1, 5));
}

#[test]
fn zero_upstream_gradient_yields_zero_parameter_grads() {
    let mut net = Mlp::new(&[3, 8, 8, 2], &mut rng(5));
    let x = Matrix::from_fn(4, 3, |r, c| (r + c) as f64 * 0.1);
    let (_, cache) = net.forward(&x);
    net.zero_grad();
    let dx = net.backward(&cache, &Matrix::zeros(4, 2));
    assert!(net.tensors().iter().all(|t| t.grad().iter().all(|&g| g == 0.0)));
    assert!(dx.as_slice().iter().all(|&g| g == 0.0));
}

/// Quadratic loss 0.5 * sum((y - target)^2) over a fixed batch; used by the
/// finite-difference checks below.
fn quadratic_loss(net: &Mlp, x: &Matrix, target: &Matrix) -> f64 {
    let y = net.forward_only(x);
    y.as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum()
}

fn quadratic_loss_grad(net: &mut Mlp, x: &Matrix, target: &Matrix) -> f64 {
    let (y, cache) = net.forward(x);
    let mut dy = y.clone();
    for (d, t) in dy.as_mut_slice().iter_mut().zip(target.as_slice()) {
        *d -= t;
    }
    net.backward(&cache, &dy);
    quadratic_loss(net, x, target)
}

#[test]
fn affine_layer_gradients_match_finite_differences() {
    let mut net = Mlp::new(&[3, 2], &mut rng(7));
    let x = Matrix::from_fn(6, 3, |r, c| ((r * 3 + c) as f64 * 0.37).sin());
    let target = Matrix::from_fn(6, 2, |r, c| ((r * 2 + c) as f64 * 0.11).cos());
    net.zero_grad();
    quadratic_loss_grad(&mut net, &x, &target);
    let coords: Vec<usize> = (0..net.num_params()).collect();
    let report = check_gradients(
        &mut net,
        &coords,
        |n| quadratic_loss(n, &x, &target),
        GradCheckSettings::default(),
    );
    assert!(report.passed(), "{}", report.summary());
}

#[test]
fn full_width_net_gradients_match_finite_differences() {
    let mut net = Mlp::new(&[19, 256, 256, 256, 2], &mut rng(13));
    let x = Matrix::from_fn(4, 19, |r, c| ((r * 19 + c) as f64 * 0.05).sin());
    let target = Matrix::from_fn(4, 2, |r, c| ((r * 2 + c) as f64 * 0.21).cos());
    net.zero_grad();
    quadratic_loss_grad(&mut net, &x, &target);
    let coords = sample_coords(net.num_params(), 100, &mut rng(99));
    let report = check_gradients(
        &mut net,
        &coords,
        |n| quadratic_loss(n, &x, &target),
        GradCheckSettings::default(),
    );
    assert!(report.passed(), "{}", report.summary());
}

#[test]
fn input_gradient_matches_finite_differences() {
    let net = Mlp::new(&[3, 16, 16, 2], &mut rng(21));
    let x = Matrix::from_fn(2, 3, |r, c| 0.3 * (r as f64) - 0.2 * (c as f64));
    let loss = |m: &Matrix| -> f64 { net.forward_only(m).as_slice().iter().sum() };
    let (_, cache) = net.forward(&x);
    let dx = net.input_gradient(&cache, &Matrix::from_fn(2, 2, |_, _| 1.0));
    let h = 1e-6;
    for r in 0..2 {
        for c in 0..3 {
            let mut xp = x.clone();
            xp.row_mut(r)[c] += h;
            let mut xm = x.clone();
            xm.row_mut(r)[c] -= h;
            let num = (loss(&xp) - loss(&xm)) / (2.0 * h);
            let ana = dx.row(r)[c];
            assert!(
                (num - ana).abs() < 1e-6 * num.abs().max(1.0),
                "input grad mismatch at ({r},{c}): {ana} vs {num}"
            );
        }
    }
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut net = Mlp::new(&[2, 4, 1], &mut rng(3));
    let before = net.clone();
    let mut state = AdamState::new(net.num_params(), 1e-3);
    net.zero_grad();
    adam_step(&mut net, &mut state);
    assert_eq!(net, before);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    // With g = 1 the bias-corrected moments cancel and the first update is
    // -lr / (1 + eps) ~ -lr.
    let mut net = Mlp::zeros(&[1, 1]);
    net.layers_mut()[0].weight.grad_mut()[0] = 1.0;
    net.layers_mut()[0].bias.grad_mut()[0] = 0.0;
    let mut state = AdamState::new(2, 1e-3);
    adam_step(&mut net, &mut state);
    let w = net.layers()[0].weight.values()[0];
    assert!((w - (-1e-3)).abs() < 1e-9, "first Adam step was {w}");
}

#[test]
fn adam_matches_reference_loop_on_scalar_quadratic() {
    // Oracle: an independently coded Adam recurrence minimizing 0.5*(w-3)^2.
    let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
    let mut w_ref = 0.0_f64;
    let (mut m, mut v) = (0.0_f64, 0.0_f64);
    for t in 1..=3 {
        let g = w_ref - 3.0;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        w_ref -= lr * m_hat / (v_hat.sqrt() + eps);
    }

    let mut net = Mlp::zeros(&[1, 1]);
    let mut state = AdamState::new(2, lr);
    for _ in 0..3 {
        net.zero_grad();
        let w = net.layers()[0].weight.values()[0];
        net.layers_mut()[0].weight.grad_mut()[0] = w - 3.0;
        adam_step(&mut net, &mut state);
    }
    let w = net.layers()[0].weight.values()[0];
    assert!((w - w_ref).abs() < 1e-14, "{w} vs reference {w_ref}");
}

#[test]
fn polyak_endpoints_and_mixing() {
    let online = Mlp::new(&[2, 3, 1], &mut rng(8));
    let mut target = Mlp::new(&[2, 3, 1], &mut rng(9));

    let mut full_copy = target.clone();
    polyak_update(&mut full_copy, &online, 0.0).unwrap();
    assert_eq!(full_copy, online);

    let frozen = target.clone();
    polyak_update(&mut target, &online, 1.0).unwrap();
    assert_eq!(target, frozen);

    let mut one = ParamVec(ParamTensor::zeros(&[1]));
    one.0.values_mut()[0] = 1.0;
    let zero = ParamVec(ParamTensor::zeros(&[1]));
    polyak_update(&mut one, &zero, 0.995).unwrap();
    assert!((one.0.values()[0] - 0.995).abs() < 1e-15);
}

#[test]
fn polyak_rejects_rho_outside_unit_interval() {
    let online = Mlp::zeros(&[2, 2]);
    let mut target = Mlp::zeros(&[2, 2]);
    assert!(polyak_update(&mut target, &online, -0.1).is_err());
    assert!(polyak_update(&mut target, &online, 1.5).is_err());
}

#[test]
fn polyak_stays_within_the_segment() {
    // Convex combination: each coordinate lands between target and online.
    let mut r = rng(17);
    for _ in 0..50 {
        let online = Mlp::new(&[3, 5, 2], &mut r);
        let mut target = Mlp::new(&[3, 5, 2], &mut r);
        let before = target.clone();
        let rho: f64 = r.gen_range(0.0..=1.0);
        polyak_update(&mut target, &online, rho).unwrap();
        for ((t, b), o) in target
            .tensors()
            .iter()
            .zip(before.tensors())
            .zip(online.tensors())
        {
            for ((tv, bv), ov) in t.values().iter().zip(b.values()).zip(o.values()) {
                let lo = bv.min(*ov) - 1e-12;
                let hi = bv.max(*ov) + 1e-12;
                assert!(*tv >= lo && *tv <= hi);
            }
        }
    }
}

struct ParamVec(ParamTensor);

impl Parameterized for ParamVec {
    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![&self.0]
    }
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.0]
    }
}

mod checkpoint_roundtrip {
    use super::*;
    use crate::nn::Checkpoint;

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Mlp::new(&[7, 32, 3], &mut rng(42));
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("algo", "test");
        ckpt.set_meta("note", "round trip");
        ckpt.push_params(&net);
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.meta("algo"), Some("test"));
        let mut restored = Mlp::zeros(&[7, 32, 3]);
        let mut cursor = 0;
        loaded.read_params_into(&mut cursor, &mut restored).unwrap();
        for (a, b) in net.tensors().iter().zip(restored.tensors()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn shape_mismatch_is_a_descriptive_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Mlp::zeros(&[4, 8, 2]);
        let mut ckpt = Checkpoint::new();
        ckpt.push_params(&net);
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        let mut wrong = Mlp::zeros(&[4, 9, 2]);
        let err = loaded
            .read_params_into(&mut 0, &mut wrong)
            .expect_err("shape mismatch must fail");
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = Mlp::new(&[3, 4, 1], &mut rng(2));
        let mut ckpt = Checkpoint::new();
        ckpt.push_params(&net);
        ckpt.save(&path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() * 2 / 3;
        std::fs::write(&path, &text[..cut]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
