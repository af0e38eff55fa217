//! Comparison methods: AWR with a unimodal Gaussian policy, and pure
//! diffusion behavior cloning.

pub mod awr;

pub use awr::{awr_loss, awr_loss_grad, awr_train, awr_weights, AwrOutput, GaussianPolicy};

use crate::dataset::OfflineDataset;
use crate::error::Result;
use crate::trainer::{train_diffusion_policy, TrainConfig, TrainMode, TrainOutput};

/// Trains the diffusion policy on the denoising loss alone: no critics, no
/// value term, no multiplier updates. This is literally the full trainer run
/// in [`TrainMode::behavior_clone`], so with identical seeds it produces the
/// same parameters as the constrained loop with the value term switched off.
pub fn diffusion_bc_train(dataset: &OfflineDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_diffusion_policy(dataset, cfg, TrainMode::behavior_clone())
}
