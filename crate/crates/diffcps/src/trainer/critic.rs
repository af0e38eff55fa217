//! Twin Q critics with Polyak-averaged targets.

use rand::rngs::StdRng;

use crate::diffusion::DiffusionPolicy;
use crate::nn::matrix::Matrix;
use crate::nn::mlp::{Mlp, MlpCache, Parameterized, ParamTensor};
use crate::nn::optim::{adam_step, AdamState};

/// A Q network over the concatenated `[s | a]` input.
#[derive(Debug, Clone)]
pub struct Critic {
    net: Mlp,
    state_dim: usize,
    action_dim: usize,
}

impl Critic {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut StdRng) -> Critic {
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Critic {
            net: Mlp::new(&dims, rng),
            state_dim,
            action_dim,
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Critic {
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Critic {
            net: Mlp::zeros(&dims),
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

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn input(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        assert_eq!(states.cols(), self.state_dim);
        assert_eq!(actions.cols(), self.action_dim);
        states.hcat(actions)
    }

    /// Q values for a batch.
    pub fn values(&self, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        let out = self.net.forward_only(&self.input(states, actions));
        out.as_slice().to_vec()
    }

    /// Q value of a single state-action pair.
    pub fn value(&self, state: &[f64], action: &[f64]) -> f64 {
        let s = Matrix::from_vec(1, state.len(), state.to_vec());
        let a = Matrix::from_vec(1, action.len(), action.to_vec());
        self.values(&s, &a)[0]
    }

    /// Forward pass keeping the cache for a later backward.
    pub fn forward_cached(&self, states: &Matrix, actions: &Matrix) -> (Vec<f64>, MlpCache) {
        let (out, cache) = self.net.forward(&self.input(states, actions));
        (out.as_slice().to_vec(), cache)
    }

    /// Accumulates parameter gradients for per-element upstream values.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &[f64]) {
        let up = Matrix::from_vec(upstream.len(), 1, upstream.to_vec());
        self.net.backward(cache, &up);
    }

    /// Gradient of the per-element upstream objective with respect to the
    /// actions only; critic parameters are untouched.
    pub fn action_gradient(&self, cache: &MlpCache, upstream: &[f64]) -> Matrix {
        let up = Matrix::from_vec(upstream.len(), 1, upstream.to_vec());
        let d_input = self.net.input_gradient(cache, &up);
        d_input.columns(self.state_dim, self.state_dim + self.action_dim)
    }
}

impl Parameterized for Critic {
    fn tensors(&self) -> Vec<&ParamTensor> {
        self.net.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.net.tensors_mut()
    }
}

/// Online critics plus their Polyak targets.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub q1: Critic,
    pub q2: Critic,
    pub q1_target: Critic,
    pub q2_target: Critic,
}

impl CriticPair {
    /// Builds both critics (q1 drawn first) with targets starting as copies.
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut StdRng) -> CriticPair {
        let q1 = Critic::new(state_dim, action_dim, hidden, rng);
        let q2 = Critic::new(state_dim, action_dim, hidden, rng);
        CriticPair {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
        }
    }
}

/// A sampled transition minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub done: Vec<bool>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Bootstrapped TD targets `y = r + gamma (1 - done) min_i Q'_i(s', a')` with
/// `a'` drawn from the online policy.
///
/// With `max_q_samples = Some(n)`, draws `n` actions per next state, takes
/// the per-critic maximum over the candidates and then the minimum across the
/// two critics. Next-action noise is only consumed for non-terminal rows.
pub fn critic_target(
    batch: &MiniBatch,
    policy: &DiffusionPolicy,
    critics: &CriticPair,
    gamma: f64,
    max_q_samples: Option<usize>,
    rng: &mut StdRng,
) -> Vec<f64> {
    let n = batch.len();
    let live: Vec<usize> = (0..n).filter(|&i| !batch.done[i]).collect();
    let mut y: Vec<f64> = batch.rewards.clone();
    if live.is_empty() {
        return y;
    }

    let mut next_live = Matrix::zeros(live.len(), batch.next_states.cols());
    for (k, &i) in live.iter().enumerate() {
        next_live.row_mut(k).copy_from_slice(batch.next_states.row(i));
    }

    let boot: Vec<f64> = match max_q_samples {
        None => {
            let a_next = policy.sample_batch(&next_live, rng);
            let q1 = critics.q1_target.values(&next_live, &a_next);
            let q2 = critics.q2_target.values(&next_live, &a_next);
            q1.iter().zip(&q2).map(|(a, b)| a.min(*b)).collect()
        }
        Some(samples) => {
            assert!(samples >= 1, "max-Q backup needs at least one sample");
            let mut best1 = vec![f64::NEG_INFINITY; live.len()];
            let mut best2 = vec![f64::NEG_INFINITY; live.len()];
            for _ in 0..samples {
                let a_next = policy.sample_batch(&next_live, rng);
                let q1 = critics.q1_target.values(&next_live, &a_next);
                let q2 = critics.q2_target.values(&next_live, &a_next);
                for k in 0..live.len() {
                    best1[k] = best1[k].max(q1[k]);
                    best2[k] = best2[k].max(q2[k]);
                }
            }
            best1.iter().zip(&best2).map(|(a, b)| a.min(*b)).collect()
        }
    };

    for (k, &i) in live.iter().enumerate() {
        y[i] += gamma * boot[k];
    }
    y
}

/// One Adam step per online critic on the squared TD error
/// `N^{-1} sum (y - Q(s, a))^2`. Returns the two pre-step loss values.
pub fn critic_step(
    critics: &mut CriticPair,
    batch: &MiniBatch,
    targets: &[f64],
    adam1: &mut AdamState,
    adam2: &mut AdamState,
) -> (f64, f64) {
    let l1 = single_critic_step(&mut critics.q1, batch, targets, adam1);
    let l2 = single_critic_step(&mut critics.q2, batch, targets, adam2);
    (l1, l2)
}

fn single_critic_step(
    critic: &mut Critic,
    batch: &MiniBatch,
    targets: &[f64],
    adam: &mut AdamState,
) -> f64 {
    let n = batch.len() as f64;
    critic.zero_grad();
    let (q, cache) = critic.forward_cached(&batch.states, &batch.actions);
    let loss = q
        .iter()
        .zip(targets)
        .map(|(qv, yv)| (yv - qv) * (yv - qv))
        .sum::<f64>()
        / n;
    // d/dq of mean (y - q)^2 is 2 (q - y) / N.
    let upstream: Vec<f64> = q
        .iter()
        .zip(targets)
        .map(|(qv, yv)| 2.0 * (qv - yv) / n)
        .collect();
    critic.backward(&cache, &upstream);
    adam_step(critic, adam);
    loss
}
