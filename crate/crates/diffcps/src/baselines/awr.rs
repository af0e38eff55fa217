//! Advantage-weighted regression with a unimodal Gaussian policy.
//!
//! The policy regresses dataset actions under weights `exp(alpha * Q(s, a))`
//! (clipped), so its fit collapses onto a single mode; on multi-modal data
//! this lands in the low-density region between modes, which is exactly the
//! contrast the diffusion policy is built to avoid. The critic here is a
//! plain reward regressor, which is the Q function of a one-step bandit.

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::OfflineDataset;
use crate::diffusion::ACTION_BOUND;
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::mlp::{Mlp, Parameterized, ParamTensor};
use crate::nn::optim::{adam_step, AdamState};
use crate::rng::{stream_rng, Stream};
use crate::trainer::critic::Critic;
use crate::trainer::{sample_minibatch, MetricsRow, TrainConfig};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy: an MLP state-to-mean map plus a learnable
/// per-dimension log standard deviation bounded to `[-5, 2]`.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    mean_net: Mlp,
    log_std: ParamTensor,
    state_dim: usize,
    action_dim: usize,
}

impl GaussianPolicy {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut StdRng) -> Self {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        GaussianPolicy {
            mean_net: Mlp::new(&dims, rng),
            log_std: ParamTensor::zeros(&[action_dim]),
            state_dim,
            action_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean_net
    }

    pub fn log_std_raw(&self) -> &ParamTensor {
        &self.log_std
    }

    pub fn log_std_raw_mut(&mut self) -> &mut ParamTensor {
        &mut self.log_std
    }

    /// Effective per-dimension standard deviations, with the raw parameter
    /// clamped into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn stds(&self) -> Vec<f64> {
        self.log_std
            .values()
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect()
    }

    pub fn mean(&self, states: &Matrix) -> Matrix {
        self.mean_net.forward_only(states)
    }

    /// Log density of `action` under the policy at `state`; finite for any
    /// finite action because the stds are bounded away from zero.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        let m = self.mean_net.forward_one(state);
        let stds = self.stds();
        let mut lp = 0.0;
        for d in 0..self.action_dim {
            let z = (action[d] - m[d]) / stds[d];
            lp -= 0.5 * (std::f64::consts::TAU).ln() + stds[d].ln() + 0.5 * z * z;
        }
        lp
    }

    /// `mean + std * z`, clamped to the action box.
    pub fn sample(&self, state: &[f64], rng: &mut StdRng) -> Vec<f64> {
        let m = self.mean_net.forward_one(state);
        let stds = self.stds();
        (0..self.action_dim)
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                (m[d] + stds[d] * z).clamp(-ACTION_BOUND, ACTION_BOUND)
            })
            .collect()
    }

    /// Batch sampling; one row per state, draws in row-major order.
    pub fn sample_batch(&self, states: &Matrix, rng: &mut StdRng) -> Matrix {
        let m = self.mean(states);
        let stds = self.stds();
        Matrix::from_fn(states.rows(), self.action_dim, |r, d| {
            let z: f64 = rng.sample(StandardNormal);
            (m.row(r)[d] + stds[d] * z).clamp(-ACTION_BOUND, ACTION_BOUND)
        })
    }
}

impl Parameterized for GaussianPolicy {
    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut t = self.mean_net.tensors();
        t.push(&self.log_std);
        t
    }
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut t = self.mean_net.tensors_mut();
        t.push(&mut self.log_std);
        t
    }
}

/// Regression weights `min(exp(alpha * Q(s, a)), clip)`; always in
/// `(0, clip]`.
pub fn awr_weights(
    critic: &Critic,
    states: &Matrix,
    actions: &Matrix,
    alpha: f64,
    weight_clip: f64,
) -> Vec<f64> {
    critic
        .values(states, actions)
        .iter()
        .map(|q| (alpha * q).exp().min(weight_clip))
        .collect()
}

/// Weighted negative log-likelihood
/// `mean_b w_b * NLL(a_b | s_b)` with critic-derived, gradient-detached
/// weights. With `alpha = 0` every weight is 1 and this is plain
/// behavior-cloning NLL.
pub fn awr_loss(
    policy: &GaussianPolicy,
    critic: &Critic,
    states: &Matrix,
    actions: &Matrix,
    alpha: f64,
    weight_clip: f64,
) -> f64 {
    let weights = awr_weights(critic, states, actions, alpha, weight_clip);
    awr_loss_with_weights(policy, states, actions, &weights)
}

fn awr_loss_with_weights(
    policy: &GaussianPolicy,
    states: &Matrix,
    actions: &Matrix,
    weights: &[f64],
) -> f64 {
    let n = states.rows();
    let m = policy.mean(states);
    let stds = policy.stds();
    let mut total = 0.0;
    for r in 0..n {
        let mut nll = 0.0;
        for d in 0..policy.action_dim {
            let z = (actions.row(r)[d] - m.row(r)[d]) / stds[d];
            nll += 0.5 * (std::f64::consts::TAU).ln() + stds[d].ln() + 0.5 * z * z;
        }
        total += weights[r] * nll;
    }
    total / n as f64
}

/// Loss plus gradients into the mean network and the log-std vector.
pub fn awr_loss_grad(
    policy: &mut GaussianPolicy,
    critic: &Critic,
    states: &Matrix,
    actions: &Matrix,
    alpha: f64,
    weight_clip: f64,
) -> f64 {
    let n = states.rows();
    let weights = awr_weights(critic, states, actions, alpha, weight_clip);
    let loss = awr_loss_with_weights(policy, states, actions, &weights);

    let (m, cache) = policy.mean_net.forward(states);
    let stds = policy.stds();
    let mut d_mean = Matrix::zeros(n, policy.action_dim);
    let mut d_log_std = vec![0.0; policy.action_dim];
    for r in 0..n {
        for d in 0..policy.action_dim {
            let z = (actions.row(r)[d] - m.row(r)[d]) / stds[d];
            // dNLL/dmean = -z / std; dNLL/dlog_std = 1 - z^2.
            d_mean.row_mut(r)[d] = weights[r] * (-z / stds[d]) / n as f64;
            d_log_std[d] += weights[r] * (1.0 - z * z) / n as f64;
        }
    }
    policy.mean_net.backward(&cache, &d_mean);
    // The clamp on log_std passes gradient only inside its bounds.
    for d in 0..policy.action_dim {
        let raw = policy.log_std.values()[d];
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
            policy.log_std.grad_mut()[d] += d_log_std[d];
        }
    }
    loss
}

/// Output of an AWR training run.
pub struct AwrOutput {
    pub policy: GaussianPolicy,
    pub critic: Critic,
    pub metrics: Vec<MetricsRow>,
}

/// Co-trains the reward-regression critic and the Gaussian policy, one Adam
/// step each per iteration. Uses the same RNG stream layout as the diffusion
/// trainer (init, batch, and the actor stream for nothing — AWR consumes no
/// sampling noise during training).
pub fn awr_train(
    dataset: &OfflineDataset,
    cfg: &TrainConfig,
    alpha: f64,
    weight_clip: f64,
) -> Result<AwrOutput> {
    cfg.validate()?;
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("AWR temperature must be >= 0, got {alpha}")));
    }
    if !(weight_clip > 0.0) {
        return Err(Error::Config(format!(
            "AWR weight clip must be > 0, got {weight_clip}"
        )));
    }
    let (s_dim, a_dim) = (dataset.state_dim(), dataset.action_dim());
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let mut policy = GaussianPolicy::new(s_dim, a_dim, &cfg.hidden, &mut init_rng);
    let mut critic = Critic::new(s_dim, a_dim, &cfg.hidden, &mut init_rng);
    let mut policy_adam = AdamState::new(policy.num_params(), cfg.lr);
    let mut critic_adam = AdamState::new(critic.num_params(), cfg.lr);
    let mut batch_rng = stream_rng(cfg.seed, Stream::Batch);

    let mut metrics = Vec::new();
    for step in 1..=cfg.steps {
        let batch = sample_minibatch(dataset, cfg.batch_size, &mut batch_rng);
        let n = batch.len() as f64;

        // Reward-regression critic: Q(s, a) -> r.
        critic.zero_grad();
        let (q, cache) = critic.forward_cached(&batch.states, &batch.actions);
        let critic_loss = q
            .iter()
            .zip(&batch.rewards)
            .map(|(qv, rv)| (rv - qv) * (rv - qv))
            .sum::<f64>()
            / n;
        let upstream: Vec<f64> = q
            .iter()
            .zip(&batch.rewards)
            .map(|(qv, rv)| 2.0 * (qv - rv) / n)
            .collect();
        critic.backward(&cache, &upstream);
        adam_step(&mut critic, &mut critic_adam);

        policy.zero_grad();
        let loss = awr_loss_grad(
            &mut policy,
            &critic,
            &batch.states,
            &batch.actions,
            alpha,
            weight_clip,
        );
        adam_step(&mut policy, &mut policy_adam);

        if step % cfg.metrics_every == 0 {
            metrics.push(MetricsRow {
                step,
                critic_loss,
                actor_q_term: loss,
                l_c: f64::NAN,
                lambda: f64::NAN,
                mean_abs_q_target: f64::NAN,
            });
        }
    }

    Ok(AwrOutput {
        policy,
        critic,
        metrics,
    })
}
