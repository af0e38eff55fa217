use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::gradcheck::{check_gradients, sample_coords, GradCheckSettings};
use crate::nn::matrix::Matrix;
use crate::nn::mlp::{mish, Mlp, Parameterized};

use super::schedule::NoiseSchedule;
use super::{DiffusionPolicy, ACTION_BOUND, TIME_EMBED_DIM};

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn default_schedule() -> NoiseSchedule {
    NoiseSchedule::vp(5, 0.1, 10.0).unwrap()
}

fn dummy_states(rows: usize) -> Matrix {
    Matrix::zeros(rows, 1)
}

#[test]
fn reverse_sample_is_deterministic_under_seeding() {
    let policy = DiffusionPolicy::new(1, 2, &[16, 16], default_schedule(), &mut rng(3));
    let a = policy.reverse_sample(&[0.0], &mut rng(77));
    let b = policy.reverse_sample(&[0.0], &mut rng(77));
    assert_eq!(a, b);
    let c = policy.reverse_sample(&[0.0], &mut rng(78));
    assert_ne!(a, c);
}

#[test]
fn sampled_actions_stay_inside_the_action_box() {
    let policy = DiffusionPolicy::new(1, 2, &[16, 16], default_schedule(), &mut rng(5));
    let actions = policy.sample_batch(&dummy_states(512), &mut rng(8));
    assert!(actions
        .as_slice()
        .iter()
        .all(|a| a.abs() <= ACTION_BOUND));
}

#[test]
fn traced_and_plain_sampling_agree() {
    let policy = DiffusionPolicy::new(1, 2, &[8, 8], default_schedule(), &mut rng(9));
    let states = dummy_states(7);
    let plain = policy.sample_batch(&states, &mut rng(123));
    let (traced, _) = policy.sample_batch_traced(&states, &mut rng(123));
    assert_eq!(plain, traced);
}

#[test]
fn zero_net_chain_matches_propagated_gaussian() {
    // With eps_theta = 0 the chain is linear-Gaussian: each step divides by
    // sqrt(alpha_i) and (except the last) adds beta_i-variance noise. The
    // oracle propagates the per-coordinate variance recursively.
    let sched = default_schedule();
    let policy = DiffusionPolicy::zeros(1, 2, &[16], sched.clone());
    let mut var = 1.0; // Var(a^T)
    for i in (2..=sched.t_steps()).rev() {
        var = var / sched.alpha(i) + sched.beta(i);
    }
    var /= sched.alpha(1); // final step is noiseless

    let n = 10_000;
    let raw = policy.sample_batch_raw(&dummy_states(n), &mut rng(31));
    for d in 0..2 {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..n {
            sum += raw.row(r)[d];
            sum_sq += raw.row(r)[d] * raw.row(r)[d];
        }
        let mean = sum / n as f64;
        let emp_var = sum_sq / n as f64 - mean * mean;
        let mean_band = 3.0 * (var / n as f64).sqrt();
        assert!(mean.abs() < mean_band, "dim {d}: mean {mean} vs band {mean_band}");
        let var_band = 3.0 * var * (2.0 / n as f64).sqrt();
        assert!(
            (emp_var - var).abs() < var_band,
            "dim {d}: var {emp_var} vs oracle {var}"
        );
    }
}

#[test]
fn perfect_denoiser_gets_zero_loss() {
    // One diffusion step, all-zero actions: a^1 = sqrt(1-ab_1) eps, so a
    // linear layer reading the action slice with weight 1/sqrt(1-ab_1)
    // reproduces eps exactly.
    let sched = NoiseSchedule::from_betas(vec![0.5]).unwrap();
    let scale = 1.0 / (1.0 - sched.alpha_bar(1)).sqrt();
    let in_dim = 2 + 1 + TIME_EMBED_DIM;
    let mut net = Mlp::zeros(&[in_dim, 2]);
    // weight shape [in, out]; rows 0..2 are the action slice
    net.layers_mut()[0].weight.values_mut()[0] = scale; // a_0 -> out_0
    net.layers_mut()[0].weight.values_mut()[2 + 1] = scale; // a_1 -> out_1
    let policy = DiffusionPolicy::with_net(1, 2, net, sched);

    let batch = 64;
    let loss = policy
        .ddpm_loss(&dummy_states(batch), &Matrix::zeros(batch, 2), &mut rng(2))
        .unwrap();
    assert!(loss < 1e-25, "perfect denoiser loss was {loss}");
}

#[test]
fn zero_net_loss_approaches_action_dim() {
    // eps_theta = 0 leaves mean ||eps||^2, whose expectation is the action
    // dimension.
    let policy = DiffusionPolicy::zeros(1, 2, &[16], default_schedule());
    let batch = 4096;
    let actions = Matrix::from_fn(batch, 2, |r, c| ((r * 2 + c) as f64 * 0.37).sin() * 0.9);
    let loss = policy
        .ddpm_loss(&dummy_states(batch), &actions, &mut rng(13))
        .unwrap();
    // Var(||eps||^2) = 2 * dim = 4, so 3 sigma of the batch mean is ~0.094.
    assert!((loss - 2.0).abs() < 0.1, "zero-net loss {loss}");
}

#[test]
fn ddpm_loss_rejects_empty_batch() {
    let policy = DiffusionPolicy::zeros(1, 2, &[8], default_schedule());
    let err = policy
        .ddpm_loss(&Matrix::zeros(0, 1), &Matrix::zeros(0, 2), &mut rng(1))
        .unwrap_err();
    assert!(matches!(err, crate::Error::Usage(_)));
}

#[test]
fn ddpm_loss_matches_straight_line_reimplementation() {
    // Independent oracle: replay the same (i, eps) draws and evaluate the
    // squared error with a from-scratch forward pass (naive matvec + Mish).
    let sched = default_schedule();
    let policy = DiffusionPolicy::new(1, 2, &[8, 8], sched.clone(), &mut rng(41));
    let batch = 10;
    let states = dummy_states(batch);
    let actions = Matrix::from_fn(batch, 2, |r, c| ((r + c) as f64 * 0.3).cos() * 0.8);

    let loss = policy.ddpm_loss(&states, &actions, &mut rng(55)).unwrap();

    // Replay the draws in the documented order: per element, step then noise.
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut replay = rng(55);
    let mut total = 0.0;
    for r in 0..batch {
        let i: usize = replay.gen_range(1..=sched.t_steps());
        let eps: Vec<f64> = (0..2).map(|_| replay.sample::<f64, _>(StandardNormal)).collect();
        let c0 = sched.alpha_bar(i).sqrt();
        let c1 = (1.0 - sched.alpha_bar(i)).sqrt();
        let a_i: Vec<f64> = (0..2).map(|d| c0 * actions.row(r)[d] + c1 * eps[d]).collect();

        // Rebuild the network input: [a | s | embedding(i)].
        let mut input = Vec::new();
        input.extend_from_slice(&a_i);
        input.extend_from_slice(states.row(r));
        let half = TIME_EMBED_DIM / 2;
        for col in 0..TIME_EMBED_DIM {
            let pair = (col / 2) as f64;
            let freq = 10_000f64.powf(-2.0 * pair / (2.0 * half as f64));
            let v = if col % 2 == 0 {
                ((i as f64) * freq).sin()
            } else {
                ((i as f64) * freq).cos()
            };
            input.push(v);
        }

        // From-scratch forward through the noise net.
        let mut h = input;
        let layers = policy.noise_net().layers();
        for (li, layer) in layers.iter().enumerate() {
            let (fan_in, fan_out) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut acc = layer.bias.values()[o];
                for (k, hv) in h.iter().enumerate().take(fan_in) {
                    acc += hv * layer.weight.values()[k * fan_out + o];
                }
                z[o] = acc;
            }
            if li + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = mish(*v));
            }
            h = z;
        }
        total += (0..2).map(|d| (eps[d] - h[d]) * (eps[d] - h[d])).sum::<f64>();
    }
    let oracle = total / batch as f64;
    assert!(
        (loss - oracle).abs() < 1e-12,
        "loss {loss} vs oracle {oracle}"
    );
}

#[test]
fn ddpm_gradients_match_finite_differences() {
    let mut policy = DiffusionPolicy::new(1, 2, &[12, 12], default_schedule(), &mut rng(6));
    let batch = 16;
    let states = dummy_states(batch);
    let actions = Matrix::from_fn(batch, 2, |r, c| ((r * 2 + c) as f64 * 0.17).sin() * 0.7);

    policy.zero_grad();
    policy
        .ddpm_loss_grad(&states, &actions, 1.0, &mut rng(91))
        .unwrap();
    let coords = sample_coords(policy.num_params(), 120, &mut rng(17));
    let report = check_gradients(
        &mut policy,
        &coords,
        |p| p.ddpm_loss(&states, &actions, &mut rng(91)).unwrap(),
        GradCheckSettings::default(),
    );
    assert!(report.passed(), "{}", report.summary());
}

#[test]
fn chain_backward_matches_finite_differences() {
    // Objective: fixed weighted sum of the clamped chain output, with the
    // chain noise frozen by re-seeding. Checks the full backward path through
    // every reverse step including the clamp mask.
    let weights = [1.0, -0.7];
    let objective = |p: &DiffusionPolicy| -> f64 {
        let actions = p.sample_batch(&dummy_states(8), &mut rng(202));
        (0..actions.rows())
            .map(|r| weights[0] * actions.row(r)[0] + weights[1] * actions.row(r)[1])
            .sum()
    };

    let mut policy = DiffusionPolicy::new(1, 2, &[10, 10], default_schedule(), &mut rng(7));
    policy.zero_grad();
    let (actions, trace) = policy.sample_batch_traced(&dummy_states(8), &mut rng(202));
    let d_a0 = Matrix::from_fn(actions.rows(), 2, |_, c| weights[c]);
    policy.chain_backward(&trace, &d_a0);

    let coords = sample_coords(policy.num_params(), 120, &mut rng(23));
    let report = check_gradients(&mut policy, &coords, objective, GradCheckSettings::default());
    assert!(report.passed(), "{}", report.summary());
}
