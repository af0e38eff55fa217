//! Adam and Polyak (exponential moving average) parameter updates.

use crate::error::{Error, Result};

use super::mlp::Parameterized;

/// Adam optimizer state for one parameter vector.
///
/// Moment arrays are laid out in the owner's flat tensor order. The step
/// counter increments once per [`adam_step`]; gradients are left untouched so
/// the caller controls when they are zeroed.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over all parameters of `params`.
pub fn adam_step<P: Parameterized + ?Sized>(params: &mut P, state: &mut AdamState) {
    assert_eq!(
        state.m.len(),
        params.num_params(),
        "Adam state size does not match the parameter count"
    );
    state.step += 1;
    let b1t = 1.0 - state.beta1.powi(state.step as i32);
    let b2t = 1.0 - state.beta2.powi(state.step as i32);
    let mut off = 0;
    for tensor in params.tensors_mut() {
        let n = tensor.len();
        let (values, grads) = tensor.values_and_grad_mut();
        for i in 0..n {
            let g = grads[i];
            let m = &mut state.m[off + i];
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            let v = &mut state.v[off + i];
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        off += n;
    }
}

/// `target <- rho * target + (1 - rho) * online`, elementwise.
///
/// `rho = 0` copies the online parameters, `rho = 1` leaves the target
/// unchanged.
pub fn polyak_update<P: Parameterized + ?Sized>(target: &mut P, online: &P, rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!(
            "polyak rho must lie in [0, 1], got {rho}"
        )));
    }
    let online_tensors = online.tensors();
    let mut target_tensors = target.tensors_mut();
    if online_tensors.len() != target_tensors.len() {
        return Err(Error::Config(
            "polyak update requires identical architectures".into(),
        ));
    }
    for (t, o) in target_tensors.iter_mut().zip(&online_tensors) {
        if t.shape() != o.shape() {
            return Err(Error::Config(
                "polyak update requires identical tensor shapes".into(),
            ));
        }
        for (tv, ov) in t.values_mut().iter_mut().zip(o.values()) {
            *tv = rho * *tv + (1.0 - rho) * ov;
        }
    }
    Ok(())
}
