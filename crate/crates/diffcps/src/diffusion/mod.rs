//! Conditional diffusion policy: forward noising, reverse-chain sampling and
//! the simplified denoising loss.
//!
//! The policy is a noise-prediction MLP over `[a^i | s | time-embedding(i)]`.
//! Sampling runs the reverse chain from a standard normal start; training
//! minimizes the noise-prediction error, optionally with gradients flowing
//! from a critic through the sampled action and back through every chain step.

pub mod schedule;

pub use schedule::NoiseSchedule;

use rand::rngs::StdRng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::mlp::{Mlp, MlpCache, Parameterized, ParamTensor};

/// Actions live in `[-ACTION_BOUND, ACTION_BOUND]^dim`; the final reverse
/// step clamps into this box.
pub const ACTION_BOUND: f64 = 1.0;

/// Dimension of the sinusoidal step embedding fed to the noise network.
pub const TIME_EMBED_DIM: usize = 16;

/// Draws a `rows x cols` matrix of standard normals, row-major order.
pub(crate) fn normal_matrix(rows: usize, cols: usize, rng: &mut StdRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// One recorded reverse step: the network cache plus its step index.
struct StepTrace {
    step: usize,
    cache: MlpCache,
}

/// Everything needed to backpropagate through a sampled reverse chain.
pub struct ChainTrace {
    steps: Vec<StepTrace>,
    /// Chain output before the box clamp.
    a0_raw: Matrix,
}

/// Conditional diffusion policy `a ~ mu_theta(. | s)`.
///
/// A single conditional noise model is used (no classifier-free mixing).
#[derive(Debug, Clone)]
pub struct DiffusionPolicy {
    noise_net: Mlp,
    schedule: NoiseSchedule,
    state_dim: usize,
    action_dim: usize,
    /// Row `i-1` is the embedding of step `i`.
    time_embed: Matrix,
}

impl DiffusionPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        schedule: NoiseSchedule,
        rng: &mut StdRng,
    ) -> DiffusionPolicy {
        let mut dims = vec![action_dim + state_dim + TIME_EMBED_DIM];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        let noise_net = Mlp::new(&dims, rng);
        Self::with_net(state_dim, action_dim, noise_net, schedule)
    }

    /// Policy whose noise network is identically zero (diagnostics only).
    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize], schedule: NoiseSchedule) -> DiffusionPolicy {
        let mut dims = vec![action_dim + state_dim + TIME_EMBED_DIM];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        Self::with_net(state_dim, action_dim, Mlp::zeros(&dims), schedule)
    }

    /// Wraps an existing noise network; its input width must be
    /// `action_dim + state_dim + TIME_EMBED_DIM` and output `action_dim`.
    pub fn with_net(
        state_dim: usize,
        action_dim: usize,
        noise_net: Mlp,
        schedule: NoiseSchedule,
    ) -> DiffusionPolicy {
        assert_eq!(
            noise_net.in_dim(),
            action_dim + state_dim + TIME_EMBED_DIM,
            "noise network input width mismatch"
        );
        assert_eq!(noise_net.out_dim(), action_dim, "noise network output width mismatch");
        let time_embed = build_time_embedding(schedule.t_steps());
        DiffusionPolicy {
            noise_net,
            schedule,
            state_dim,
            action_dim,
            time_embed,
        }
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn noise_net(&self) -> &Mlp {
        &self.noise_net
    }

    pub fn noise_net_mut(&mut self) -> &mut Mlp {
        &mut self.noise_net
    }

    /// `[a^i | s | emb(i)]` for a batch.
    fn eps_input(&self, a_i: &Matrix, states: &Matrix, step: usize) -> Matrix {
        assert_eq!(a_i.rows(), states.rows());
        assert_eq!(a_i.cols(), self.action_dim);
        assert_eq!(states.cols(), self.state_dim);
        let cols = self.action_dim + self.state_dim + TIME_EMBED_DIM;
        let emb = self.time_embed.row(step - 1);
        let mut out = Matrix::zeros(a_i.rows(), cols);
        for r in 0..a_i.rows() {
            let row = out.row_mut(r);
            row[..self.action_dim].copy_from_slice(a_i.row(r));
            row[self.action_dim..self.action_dim + self.state_dim].copy_from_slice(states.row(r));
            row[self.action_dim + self.state_dim..].copy_from_slice(emb);
        }
        out
    }

    /// Predicted noise `eps_theta(a^i, s, i)` for a batch.
    pub fn predict_noise(&self, a_i: &Matrix, states: &Matrix, step: usize) -> Matrix {
        self.noise_net.forward_only(&self.eps_input(a_i, states, step))
    }

    /// Runs the reverse chain for a batch of states, returning the raw
    /// (unclamped) output.
    ///
    /// Draw order per call: the start `a^T` (row-major), then for each step
    /// `i = T..2` one row-major noise matrix. The final step adds no noise.
    fn chain(&self, states: &Matrix, rng: &mut StdRng, trace: bool) -> (Matrix, Option<ChainTrace>) {
        let t = self.schedule.t_steps();
        let batch = states.rows();
        let mut x = normal_matrix(batch, self.action_dim, rng);
        let mut steps = Vec::with_capacity(if trace { t } else { 0 });
        for i in (1..=t).rev() {
            let input = self.eps_input(&x, states, i);
            let eps_hat = if trace {
                let (out, cache) = self.noise_net.forward(&input);
                steps.push(StepTrace { step: i, cache });
                out
            } else {
                self.noise_net.forward_only(&input)
            };
            let coef = self.schedule.beta(i) / (1.0 - self.schedule.alpha_bar(i)).sqrt();
            let inv = 1.0 / self.schedule.alpha(i).sqrt();
            for r in 0..batch {
                let xr = x.row_mut(r);
                let er = eps_hat.row(r);
                for d in 0..self.action_dim {
                    xr[d] = inv * (xr[d] - coef * er[d]);
                }
            }
            if i > 1 {
                let z = normal_matrix(batch, self.action_dim, rng);
                let sd = self.schedule.beta(i).sqrt();
                for (xv, zv) in x.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *xv += sd * zv;
                }
            }
        }
        let trace = trace.then(|| ChainTrace {
            steps,
            a0_raw: x.clone(),
        });
        (x, trace)
    }

    fn clamp_actions(mut a: Matrix) -> Matrix {
        for v in a.as_mut_slice() {
            *v = v.clamp(-ACTION_BOUND, ACTION_BOUND);
        }
        a
    }

    /// Samples one action for one state (clamped to the action box).
    pub fn reverse_sample(&self, state: &[f64], rng: &mut StdRng) -> Vec<f64> {
        let states = Matrix::from_vec(1, state.len(), state.to_vec());
        let (a, _) = self.chain(&states, rng, false);
        Self::clamp_actions(a).row(0).to_vec()
    }

    /// Samples a batch of actions, one per state row (clamped).
    pub fn sample_batch(&self, states: &Matrix, rng: &mut StdRng) -> Matrix {
        Self::clamp_actions(self.chain(states, rng, false).0)
    }

    /// Like [`DiffusionPolicy::sample_batch`] but without the final clamp;
    /// exposes the raw chain output for distribution diagnostics.
    pub fn sample_batch_raw(&self, states: &Matrix, rng: &mut StdRng) -> Matrix {
        self.chain(states, rng, false).0
    }

    /// Samples a batch while recording everything needed to backpropagate
    /// through the chain. Returns the clamped actions.
    pub fn sample_batch_traced(&self, states: &Matrix, rng: &mut StdRng) -> (Matrix, ChainTrace) {
        let (a, trace) = self.chain(states, rng, true);
        (Self::clamp_actions(a), trace.expect("trace requested"))
    }

    /// Backpropagates `d_loss/d_a0` through the recorded reverse chain,
    /// accumulating noise-network parameter gradients.
    ///
    /// The injected chain noise is reparameterized (independent of the
    /// parameters), so gradients flow only through the per-step means. The
    /// clamp contributes a pass-through mask: coordinates that landed outside
    /// the box get zero gradient.
    pub fn chain_backward(&mut self, trace: &ChainTrace, d_a0: &Matrix) {
        assert_eq!(d_a0.rows(), trace.a0_raw.rows());
        assert_eq!(d_a0.cols(), self.action_dim);
        let mut g = d_a0.clone();
        for (gv, raw) in g.as_mut_slice().iter_mut().zip(trace.a0_raw.as_slice()) {
            if raw.abs() > ACTION_BOUND {
                *gv = 0.0;
            }
        }
        // Steps were recorded for i = T..1; walk them chronologically
        // backwards, i.e. from i = 1 up to i = T.
        for st in trace.steps.iter().rev() {
            let i = st.step;
            let coef = self.schedule.beta(i) / (1.0 - self.schedule.alpha_bar(i)).sqrt();
            let inv = 1.0 / self.schedule.alpha(i).sqrt();
            // a^{i-1} = inv * (a^i - coef * eps_hat) (+ noise):
            // upstream into eps_hat is -inv * coef * g, and the direct path
            // contributes inv * g through a^i.
            let mut up_eps = g.clone();
            up_eps.scale(-inv * coef);
            let d_input = self.noise_net.backward(&st.cache, &up_eps);
            let mut g_next = d_input.columns(0, self.action_dim);
            for (gn, gv) in g_next.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *gn += inv * gv;
            }
            g = g_next;
        }
    }

    /// Denoising loss value: mean over the batch of
    /// `|| eps - eps_theta(sqrt(ab_i) a + sqrt(1-ab_i) eps, s, i) ||^2`
    /// with `i` uniform on `1..=T` and `eps` standard normal, drawn per
    /// element in batch order (`i` first, then the noise row).
    pub fn ddpm_loss(&self, states: &Matrix, actions: &Matrix, rng: &mut StdRng) -> Result<f64> {
        let (loss, _, _, _) = self.ddpm_forward(states, actions, rng)?;
        Ok(loss)
    }

    /// Denoising loss with gradients accumulated into the noise network,
    /// scaled by `weight`. Returns the (unscaled) loss value.
    pub fn ddpm_loss_grad(
        &mut self,
        states: &Matrix,
        actions: &Matrix,
        weight: f64,
        rng: &mut StdRng,
    ) -> Result<f64> {
        let (loss, diffs, caches, batch) = self.ddpm_forward(states, actions, rng)?;
        // d/d eps_hat of mean ||eps - eps_hat||^2 is -2 (eps - eps_hat) / N.
        let scale = -2.0 * weight / batch as f64;
        for (diff, cache) in diffs.iter().zip(&caches) {
            let mut up = diff.clone();
            up.scale(scale);
            self.noise_net.backward(cache, &up);
        }
        Ok(loss)
    }

    /// Shared denoising-loss forward pass. Groups batch elements by their
    /// drawn step so each group runs as one matrix forward; returns per-group
    /// `(eps - eps_hat)` matrices and caches aligned with the groups.
    #[allow(clippy::type_complexity)]
    fn ddpm_forward(
        &self,
        states: &Matrix,
        actions: &Matrix,
        rng: &mut StdRng,
    ) -> Result<(f64, Vec<Matrix>, Vec<MlpCache>, usize)> {
        if states.rows() == 0 {
            return Err(Error::Usage("denoising loss needs a nonempty batch".into()));
        }
        assert_eq!(states.rows(), actions.rows(), "state/action batch mismatch");
        assert_eq!(actions.cols(), self.action_dim, "action dimension mismatch");
        let batch = states.rows();
        let t = self.schedule.t_steps();

        // Per-element draws, in batch order.
        let mut step_of = Vec::with_capacity(batch);
        let mut eps = Matrix::zeros(batch, self.action_dim);
        for r in 0..batch {
            step_of.push(rng.gen_range(1..=t));
            for d in 0..self.action_dim {
                eps.row_mut(r)[d] = rng.sample(StandardNormal);
            }
        }

        let mut loss = 0.0;
        let mut diffs = Vec::new();
        let mut caches = Vec::new();
        for i in 1..=t {
            let rows: Vec<usize> = (0..batch).filter(|&r| step_of[r] == i).collect();
            if rows.is_empty() {
                continue;
            }
            let c0 = self.schedule.alpha_bar(i).sqrt();
            let c1 = (1.0 - self.schedule.alpha_bar(i)).sqrt();
            let mut a_i = Matrix::zeros(rows.len(), self.action_dim);
            let mut s = Matrix::zeros(rows.len(), self.state_dim);
            let mut e = Matrix::zeros(rows.len(), self.action_dim);
            for (k, &r) in rows.iter().enumerate() {
                for d in 0..self.action_dim {
                    a_i.row_mut(k)[d] = c0 * actions.row(r)[d] + c1 * eps.row(r)[d];
                    e.row_mut(k)[d] = eps.row(r)[d];
                }
                s.row_mut(k).copy_from_slice(states.row(r));
            }
            let input = self.eps_input(&a_i, &s, i);
            let (eps_hat, cache) = self.noise_net.forward(&input);
            let mut diff = e.clone();
            for (dv, hv) in diff.as_mut_slice().iter_mut().zip(eps_hat.as_slice()) {
                *dv -= hv;
            }
            loss += diff.as_slice().iter().map(|d| d * d).sum::<f64>();
            diffs.push(diff);
            caches.push(cache);
        }
        Ok((loss / batch as f64, diffs, caches, batch))
    }
}

impl Parameterized for DiffusionPolicy {
    fn tensors(&self) -> Vec<&ParamTensor> {
        self.noise_net.tensors()
    }
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.noise_net.tensors_mut()
    }
}

/// Sinusoidal embedding of the integer steps `1..=T`; injective in the step
/// and smooth in the frequencies.
fn build_time_embedding(t_steps: usize) -> Matrix {
    let half = TIME_EMBED_DIM / 2;
    Matrix::from_fn(t_steps, TIME_EMBED_DIM, |row, col| {
        let step = (row + 1) as f64;
        let pair = (col / 2) as f64;
        let freq = 10_000f64.powf(-2.0 * pair / (2.0 * half as f64));
        if col % 2 == 0 {
            (step * freq).sin()
        } else {
            (step * freq).cos()
        }
    })
}

#[cfg(test)]
mod tests;
