//! The constrained-policy-search training loop.
//!
//! Each gradient step samples a transition minibatch, fits the twin critics
//! against bootstrapped targets, and on every `eval_interval`-th step improves
//! the policy on the normalized critic value plus the multiplier-weighted
//! denoising loss, then adapts the multiplier toward its constraint level.
//! Target networks track the online ones by Polyak averaging every step.
//!
//! All randomness comes from per-purpose streams derived from the run seed,
//! so runs are bit-reproducible and switching a component off never shifts
//! the draws of the others.

pub mod critic;
pub mod dual;

pub use critic::{critic_step, critic_target, Critic, CriticPair, MiniBatch};
pub use dual::DualState;

use rand::rngs::StdRng;
use rand::Rng;

use crate::dataset::OfflineDataset;
use crate::diffusion::{DiffusionPolicy, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::mlp::Parameterized;
use crate::nn::optim::{adam_step, polyak_update, AdamState};
use crate::rng::{stream_rng, Stream};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Policy evaluation interval `d`: the actor and the multiplier update on
    /// every `d`-th step.
    pub eval_interval: usize,
    pub lr: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
    pub kappa: f64,
    /// Clip floor `c` in `lambda_clip = max(c, lambda)`.
    pub lambda_clip_floor: f64,
    /// When false the multiplier stays at its (clipped) initial value.
    pub dual_enabled: bool,
    /// Polyak coefficient for all target networks.
    pub rho: f64,
    pub t_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub max_q_backup: bool,
    pub max_q_samples: usize,
    pub hidden: Vec<usize>,
    pub metrics_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 256,
            gamma: 0.99,
            eval_interval: 2,
            lr: 3e-4,
            lambda_lr: 3e-4,
            lambda_init: 1.0,
            kappa: 0.04,
            lambda_clip_floor: 0.0,
            dual_enabled: true,
            rho: 0.995,
            t_steps: 5,
            beta_min: 0.1,
            beta_max: 10.0,
            max_q_backup: false,
            max_q_samples: 10,
            hidden: vec![256, 256, 256],
            metrics_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("policy evaluation interval must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.max_q_backup && self.max_q_samples == 0 {
            return Err(Error::Config("max-Q backup needs at least one sample".into()));
        }
        if self.metrics_every == 0 {
            return Err(Error::Config("metrics cadence must be >= 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        // Schedule and dual-state construction re-validate their own fields.
        NoiseSchedule::vp(self.t_steps, self.beta_min, self.beta_max)?;
        DualState::new(self.lambda_init, self.kappa, self.lambda_clip_floor, self.lambda_lr)?;
        Ok(())
    }
}

/// Which parts of the full loop run; behavior cloning switches everything but
/// the denoising term off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainMode {
    pub use_critic: bool,
    pub use_q_term: bool,
    pub use_dual: bool,
}

impl TrainMode {
    pub fn full() -> Self {
        TrainMode {
            use_critic: true,
            use_q_term: true,
            use_dual: true,
        }
    }

    /// Denoising loss only: no critics, no value term, no multiplier updates.
    pub fn behavior_clone() -> Self {
        TrainMode {
            use_critic: false,
            use_q_term: false,
            use_dual: false,
        }
    }
}

/// One metrics record. Fields that a mode does not produce are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_q_term: f64,
    pub l_c: f64,
    pub lambda: f64,
    pub mean_abs_q_target: f64,
}

pub const METRICS_HEADER: &str = "step,critic_loss,actor_q_term,l_c,lambda,mean_abs_q_target";

/// Serializes metrics rows as CSV with the fixed header.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.critic_loss, r.actor_q_term, r.l_c, r.lambda, r.mean_abs_q_target
        ));
    }
    out
}

/// Result of a diffusion-policy training run.
pub struct TrainOutput {
    pub policy: DiffusionPolicy,
    pub policy_target: DiffusionPolicy,
    pub critics: Option<CriticPair>,
    pub dual: Option<DualState>,
    pub metrics: Vec<MetricsRow>,
    pub actor_updates: usize,
    /// Number of actor steps where the Q normalizer fell back to 1.
    pub scale_fallbacks: usize,
}

/// Statistics of one actor update.
#[derive(Debug, Clone, Copy)]
pub struct ActorStepStats {
    /// The normalized value term `-mean(Q1) / scale`.
    pub q_term: f64,
    /// Denoising loss on the batch (unweighted).
    pub l_c: f64,
    /// The detached normalizer actually used (after any fallback).
    pub scale: f64,
    /// Batch mean of `|Q_target|` before the fallback.
    pub mean_abs_q_target: f64,
    pub scale_fallback: bool,
}

impl ActorStepStats {
    pub fn loss(&self, lambda_clip: f64) -> f64 {
        self.q_term + lambda_clip * self.l_c
    }
}

/// Floor below which the Q normalizer is considered degenerate.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Accumulates actor gradients for one update: the value term flows from the
/// first online critic through the sampled action and back through the whole
/// reverse chain; the denoising term is weighted by `lambda_clip`. The caller
/// zeroes gradients first and applies the optimizer afterwards.
///
/// The normalizer (batch mean of `|Q1_target(s, a_sampled)|`) is treated as a
/// constant: no gradient flows through it.
pub fn actor_step(
    policy: &mut DiffusionPolicy,
    critics: &CriticPair,
    states: &Matrix,
    actions: &Matrix,
    lambda_clip: f64,
    actor_rng: &mut StdRng,
    ddpm_rng: &mut StdRng,
) -> Result<ActorStepStats> {
    let n = states.rows();
    if n == 0 {
        return Err(Error::Usage("actor update needs a nonempty batch".into()));
    }
    let (a0, trace) = policy.sample_batch_traced(states, actor_rng);
    let (q1, q1_cache) = critics.q1.forward_cached(states, &a0);
    let qt = critics.q1_target.values(states, &a0);

    let mean_abs_q_target = qt.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let (scale, scale_fallback) = if mean_abs_q_target < SCALE_FLOOR {
        (1.0, true)
    } else {
        (mean_abs_q_target, false)
    };

    let q_term = -q1.iter().sum::<f64>() / n as f64 / scale;
    let upstream = vec![-1.0 / (n as f64 * scale); n];
    let d_a0 = critics.q1.action_gradient(&q1_cache, &upstream);
    policy.chain_backward(&trace, &d_a0);

    let l_c = policy.ddpm_loss_grad(states, actions, lambda_clip, ddpm_rng)?;

    Ok(ActorStepStats {
        q_term,
        l_c,
        scale,
        mean_abs_q_target,
        scale_fallback,
    })
}

/// Pure value of the actor objective at a pinned normalizer, consuming the
/// same draws as [`actor_step`]. Used by finite-difference checks and
/// oracle tests; `scale` must be the detached value of the update being
/// verified.
pub fn actor_objective(
    policy: &DiffusionPolicy,
    critics: &CriticPair,
    states: &Matrix,
    actions: &Matrix,
    lambda_clip: f64,
    scale: f64,
    actor_rng: &mut StdRng,
    ddpm_rng: &mut StdRng,
) -> Result<f64> {
    let n = states.rows();
    if n == 0 {
        return Err(Error::Usage("actor objective needs a nonempty batch".into()));
    }
    let a0 = policy.sample_batch(states, actor_rng);
    let q1 = critics.q1.values(states, &a0);
    let q_term = -q1.iter().sum::<f64>() / n as f64 / scale;
    let l_c = policy.ddpm_loss(states, actions, ddpm_rng)?;
    Ok(q_term + lambda_clip * l_c)
}

/// Draws a uniform-with-replacement minibatch.
pub fn sample_minibatch(dataset: &OfflineDataset, batch_size: usize, rng: &mut StdRng) -> MiniBatch {
    let n = dataset.len();
    let (s_dim, a_dim) = (dataset.state_dim(), dataset.action_dim());
    let mut states = Matrix::zeros(batch_size, s_dim);
    let mut actions = Matrix::zeros(batch_size, a_dim);
    let mut next_states = Matrix::zeros(batch_size, s_dim);
    let mut rewards = Vec::with_capacity(batch_size);
    let mut done = Vec::with_capacity(batch_size);
    for r in 0..batch_size {
        let t = dataset.get(rng.gen_range(0..n));
        states.row_mut(r).copy_from_slice(&t.state);
        actions.row_mut(r).copy_from_slice(&t.action);
        next_states.row_mut(r).copy_from_slice(&t.next_state);
        rewards.push(t.reward);
        done.push(t.done);
    }
    MiniBatch {
        states,
        actions,
        rewards,
        next_states,
        done,
    }
}

/// Full constrained-policy-search training (critics, value term, dual loop).
pub fn train_diffcps(dataset: &OfflineDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_diffusion_policy(dataset, cfg, TrainMode::full())
}

/// Trains a diffusion policy under the given mode. See [`TrainMode`].
pub fn train_diffusion_policy(
    dataset: &OfflineDataset,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainOutput> {
    cfg.validate()?;
    assert!(
        mode.use_critic || !mode.use_q_term,
        "the value term needs critics"
    );
    let (s_dim, a_dim) = (dataset.state_dim(), dataset.action_dim());
    let schedule = NoiseSchedule::vp(cfg.t_steps, cfg.beta_min, cfg.beta_max)?;

    // Parameter init consumes the Init stream in a fixed order: policy first,
    // then (when present) the critics.
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let mut policy = DiffusionPolicy::new(s_dim, a_dim, &cfg.hidden, schedule, &mut init_rng);
    let mut policy_target = policy.clone();
    let mut critics = mode
        .use_critic
        .then(|| CriticPair::new(s_dim, a_dim, &cfg.hidden, &mut init_rng));

    let mut actor_adam = AdamState::new(policy.num_params(), cfg.lr);
    let mut critic_adams = critics
        .as_ref()
        .map(|c| (AdamState::new(c.q1.num_params(), cfg.lr), AdamState::new(c.q2.num_params(), cfg.lr)));
    let mut dual = DualState::new(cfg.lambda_init, cfg.kappa, cfg.lambda_clip_floor, cfg.lambda_lr)?;

    let mut batch_rng = stream_rng(cfg.seed, Stream::Batch);
    let mut critic_rng = stream_rng(cfg.seed, Stream::CriticActions);
    let mut actor_rng = stream_rng(cfg.seed, Stream::ActorChain);
    let mut ddpm_rng = stream_rng(cfg.seed, Stream::DenoiseLoss);

    let max_q = cfg.max_q_backup.then_some(cfg.max_q_samples);
    let mut metrics = Vec::new();
    let mut actor_updates = 0usize;
    let mut scale_fallbacks = 0usize;
    let mut last_critic_loss = f64::NAN;
    let mut last_actor = (f64::NAN, f64::NAN, f64::NAN); // (q_term, l_c, mean|Q_t|)

    for step in 1..=cfg.steps {
        let batch = sample_minibatch(dataset, cfg.batch_size, &mut batch_rng);

        if let (Some(critics), Some((adam1, adam2))) = (critics.as_mut(), critic_adams.as_mut()) {
            let y = critic_target(&batch, &policy, critics, cfg.gamma, max_q, &mut critic_rng);
            let (l1, l2) = critic_step(critics, &batch, &y, adam1, adam2);
            last_critic_loss = l1 + l2;
        }

        if step % cfg.eval_interval == 0 {
            policy.zero_grad();
            let lambda_clip = dual.lambda_clip();
            let stats = if mode.use_q_term {
                let critics = critics.as_ref().expect("q term needs critics");
                actor_step(
                    &mut policy,
                    critics,
                    &batch.states,
                    &batch.actions,
                    lambda_clip,
                    &mut actor_rng,
                    &mut ddpm_rng,
                )?
            } else {
                let l_c =
                    policy.ddpm_loss_grad(&batch.states, &batch.actions, lambda_clip, &mut ddpm_rng)?;
                ActorStepStats {
                    q_term: f64::NAN,
                    l_c,
                    scale: f64::NAN,
                    mean_abs_q_target: f64::NAN,
                    scale_fallback: false,
                }
            };
            adam_step(&mut policy, &mut actor_adam);
            if stats.scale_fallback {
                if scale_fallbacks == 0 {
                    eprintln!(
                        "warning: actor Q normalizer below {SCALE_FLOOR:e} at step {step}; using 1.0"
                    );
                }
                scale_fallbacks += 1;
            }
            if mode.use_dual && cfg.dual_enabled {
                dual.step(stats.l_c);
            }
            actor_updates += 1;
            last_actor = (stats.q_term, stats.l_c, stats.mean_abs_q_target);
        }

        polyak_update(&mut policy_target, &policy, cfg.rho)?;
        if let Some(critics) = critics.as_mut() {
            polyak_update(&mut critics.q1_target, &critics.q1, cfg.rho)?;
            polyak_update(&mut critics.q2_target, &critics.q2, cfg.rho)?;
        }

        if step % cfg.metrics_every == 0 {
            metrics.push(MetricsRow {
                step,
                critic_loss: last_critic_loss,
                actor_q_term: last_actor.0,
                l_c: last_actor.1,
                lambda: dual.lambda(),
                mean_abs_q_target: last_actor.2,
            });
        }
    }

    Ok(TrainOutput {
        policy,
        policy_target,
        critics,
        dual: Some(dual),
        metrics,
        actor_updates,
        scale_fallbacks,
    })
}
