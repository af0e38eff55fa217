//! Constrained policy search with diffusion policies, for offline RL at desk
//! scale.
//!
//! The crate trains a conditional denoising-diffusion policy against a static
//! transition dataset by solving a constrained policy-search problem with a
//! Lagrangian dual loop: twin Q critics supply the improvement signal, the
//! denoising loss acts as a behavior-cloning constraint, and the multiplier
//! adapts until the constraint level is met. Two baselines — advantage
//! weighted regression with a unimodal Gaussian policy, and pure diffusion
//! behavior cloning — plus a noisy-circle bandit generator and score metrics
//! make the expressivity comparison reproducible end to end.
//!
//! See the guide in `book/` for a narrative walk-through; its code snippets
//! are compiled and run as doc-tests.

pub mod artifacts;
pub mod baselines;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod trainer;
pub mod rng;

pub use error::{Error, Result};
