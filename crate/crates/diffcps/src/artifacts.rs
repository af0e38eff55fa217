//! Run-level glue: dispatching training by algorithm and packing trained
//! policies into checkpoints that evaluation can reconstruct.

use std::path::Path;

use crate::baselines::{awr_train, diffusion_bc_train, GaussianPolicy};
use crate::config::{Algo, ExperimentConfig};
use crate::dataset::OfflineDataset;
use crate::diffusion::{DiffusionPolicy, NoiseSchedule};
use crate::error::{Error, Result};
use crate::eval::SamplingPolicy;
use crate::nn::Checkpoint;
use crate::trainer::{train_diffcps, Critic, CriticPair, MetricsRow};

/// A trained policy plus whatever sidecar networks its algorithm keeps.
pub enum TrainedPolicy {
    Diffcps {
        policy: DiffusionPolicy,
        critics: CriticPair,
    },
    DiffusionBc {
        policy: DiffusionPolicy,
    },
    Awr {
        policy: GaussianPolicy,
        critic: Critic,
    },
}

impl TrainedPolicy {
    pub fn algo(&self) -> Algo {
        match self {
            TrainedPolicy::Diffcps { .. } => Algo::Diffcps,
            TrainedPolicy::DiffusionBc { .. } => Algo::DiffusionBc,
            TrainedPolicy::Awr { .. } => Algo::Awr,
        }
    }

    pub fn sampling(&self) -> &dyn SamplingPolicy {
        match self {
            TrainedPolicy::Diffcps { policy, .. } => policy,
            TrainedPolicy::DiffusionBc { policy } => policy,
            TrainedPolicy::Awr { policy, .. } => policy,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.sampling().state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.sampling().action_dim()
    }

    /// Writes the checkpoint: architecture metadata plus all parameter
    /// tensors in a fixed per-algorithm order.
    pub fn save(&self, path: &Path, cfg: &ExperimentConfig) -> Result<()> {
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("algo", self.algo());
        ckpt.set_meta("state_dim", self.state_dim());
        ckpt.set_meta("action_dim", self.action_dim());
        let hidden: Vec<String> = cfg.train.hidden.iter().map(|h| h.to_string()).collect();
        ckpt.set_meta("hidden", hidden.join(","));
        match self {
            TrainedPolicy::Diffcps { policy, critics } => {
                let sched = policy.schedule();
                ckpt.set_meta("t_steps", sched.t_steps());
                ckpt.set_meta("beta_min", sched.beta_min());
                ckpt.set_meta("beta_max", sched.beta_max());
                ckpt.push_params(policy);
                ckpt.push_params(&critics.q1);
                ckpt.push_params(&critics.q2);
            }
            TrainedPolicy::DiffusionBc { policy } => {
                let sched = policy.schedule();
                ckpt.set_meta("t_steps", sched.t_steps());
                ckpt.set_meta("beta_min", sched.beta_min());
                ckpt.set_meta("beta_max", sched.beta_max());
                ckpt.push_params(policy);
            }
            TrainedPolicy::Awr { policy, critic } => {
                ckpt.push_params(policy);
                ckpt.push_params(critic);
            }
        }
        ckpt.save(path)
    }

    pub fn load(path: &Path) -> Result<TrainedPolicy> {
        let ckpt = Checkpoint::load(path)?;
        let algo: String = ckpt.meta_parsed("algo")?;
        let algo: Algo = algo
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unknown checkpoint algo `{algo}`")))?;
        let state_dim: usize = ckpt.meta_parsed("state_dim")?;
        let action_dim: usize = ckpt.meta_parsed("action_dim")?;
        let hidden_raw: String = ckpt.meta_parsed("hidden")?;
        let hidden: Vec<usize> = hidden_raw
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Checkpoint(format!("bad hidden spec `{hidden_raw}`")))
            })
            .collect::<Result<_>>()?;

        let mut cursor = 0usize;
        match algo {
            Algo::Diffcps | Algo::DiffusionBc => {
                let t_steps: usize = ckpt.meta_parsed("t_steps")?;
                let beta_min: f64 = ckpt.meta_parsed("beta_min")?;
                let beta_max: f64 = ckpt.meta_parsed("beta_max")?;
                let schedule = NoiseSchedule::vp(t_steps, beta_min, beta_max)
                    .map_err(|e| Error::Checkpoint(format!("invalid schedule metadata: {e}")))?;
                let mut policy =
                    DiffusionPolicy::zeros(state_dim, action_dim, &hidden, schedule);
                ckpt.read_params_into(&mut cursor, &mut policy)?;
                if algo == Algo::DiffusionBc {
                    return Ok(TrainedPolicy::DiffusionBc { policy });
                }
                let mut critics = CriticPair {
                    q1: Critic::zeros(state_dim, action_dim, &hidden),
                    q2: Critic::zeros(state_dim, action_dim, &hidden),
                    q1_target: Critic::zeros(state_dim, action_dim, &hidden),
                    q2_target: Critic::zeros(state_dim, action_dim, &hidden),
                };
                ckpt.read_params_into(&mut cursor, &mut critics.q1)?;
                ckpt.read_params_into(&mut cursor, &mut critics.q2)?;
                critics.q1_target = critics.q1.clone();
                critics.q2_target = critics.q2.clone();
                Ok(TrainedPolicy::Diffcps { policy, critics })
            }
            Algo::Awr => {
                let mut rng = rand::SeedableRng::seed_from_u64(0);
                let mut policy = GaussianPolicy::new(state_dim, action_dim, &hidden, &mut rng);
                ckpt.read_params_into(&mut cursor, &mut policy)?;
                let mut critic = Critic::zeros(state_dim, action_dim, &hidden);
                ckpt.read_params_into(&mut cursor, &mut critic)?;
                Ok(TrainedPolicy::Awr { policy, critic })
            }
        }
    }
}

/// Trains with the configured algorithm and returns the policy bundle plus
/// the metrics rows.
pub fn run_training(
    dataset: &OfflineDataset,
    cfg: &ExperimentConfig,
) -> Result<(TrainedPolicy, Vec<MetricsRow>)> {
    cfg.validate()?;
    match cfg.algo {
        Algo::Diffcps => {
            let out = train_diffcps(dataset, &cfg.train)?;
            let critics = out.critics.expect("full trainer keeps critics");
            Ok((
                TrainedPolicy::Diffcps {
                    policy: out.policy,
                    critics,
                },
                out.metrics,
            ))
        }
        Algo::DiffusionBc => {
            let out = diffusion_bc_train(dataset, &cfg.train)?;
            Ok((TrainedPolicy::DiffusionBc { policy: out.policy }, out.metrics))
        }
        Algo::Awr => {
            let out = awr_train(dataset, &cfg.train, cfg.awr_alpha, cfg.awr_weight_clip)?;
            Ok((
                TrainedPolicy::Awr {
                    policy: out.policy,
                    critic: out.critic,
                },
                out.metrics,
            ))
        }
    }
}
