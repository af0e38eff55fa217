//! Dense-network machinery: matrices, MLPs with exact gradients, Adam,
//! Polyak target updates and parameter checkpoints.

pub mod checkpoint;
pub mod matrix;
pub mod mlp;
pub mod optim;

pub use checkpoint::Checkpoint;
pub use matrix::Matrix;
pub use mlp::{mish, mish_prime, LinearLayer, Mlp, MlpCache, Parameterized, ParamTensor};
pub use optim::{adam_step, polyak_update, AdamState};

#[cfg(test)]
mod tests;
