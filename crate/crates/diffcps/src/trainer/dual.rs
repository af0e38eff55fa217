//! The Lagrange multiplier on the behavior-cloning constraint.

use crate::error::{Error, Result};

/// Dual variable `lambda` with its constraint level `kappa`, clip floor `c`
/// and step size. `lambda >= c` holds after construction and every update.
#[derive(Debug, Clone)]
pub struct DualState {
    lambda: f64,
    pub kappa: f64,
    pub clip_floor: f64,
    pub lambda_lr: f64,
}

impl DualState {
    pub fn new(lambda_init: f64, kappa: f64, clip_floor: f64, lambda_lr: f64) -> Result<DualState> {
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be > 0, got {kappa}")));
        }
        if !(clip_floor >= 0.0) {
            return Err(Error::Config(format!("clip floor must be >= 0, got {clip_floor}")));
        }
        if !(lambda_lr > 0.0) {
            return Err(Error::Config(format!("lambda_lr must be > 0, got {lambda_lr}")));
        }
        Ok(DualState {
            lambda: lambda_init.max(clip_floor),
            kappa,
            clip_floor,
            lambda_lr,
        })
    }

    /// Current multiplier; always `>= clip_floor`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The coefficient the actor objective uses: `max(c, lambda)`.
    pub fn lambda_clip(&self) -> f64 {
        self.lambda.max(self.clip_floor)
    }

    /// One descent step on `lambda (kappa - L_c)`:
    /// `lambda <- lambda - lr (kappa - L_c)`, clipped to the floor. The
    /// multiplier rises when the constraint is violated (`L_c > kappa`) and
    /// falls otherwise.
    pub fn step(&mut self, observed_lc: f64) {
        debug_assert!(observed_lc >= 0.0, "denoising loss is non-negative");
        self.lambda -= self.lambda_lr * (self.kappa - observed_lc);
        self.lambda = self.lambda.max(self.clip_floor);
    }
}
