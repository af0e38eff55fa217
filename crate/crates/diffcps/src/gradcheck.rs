//! Central-finite-difference gradient checking.
//!
//! Verifies analytic gradients coordinate by coordinate: perturb one
//! parameter by `±h`, re-evaluate the loss, and compare the quotient against
//! the stored gradient. The loss closure must be a pure function of the
//! parameters — any internal randomness has to be re-seeded identically on
//! every call, and any quantity the objective treats as a constant (for
//! example a detached normalizer) has to be pinned by the caller.

use rand::rngs::StdRng;
use rand::seq::index::sample;

use crate::nn::Parameterized;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub h: f64,
    /// Relative tolerance; relative error is `|a - n| / |n|` when the
    /// numerical gradient is away from zero.
    pub rel_tol: f64,
    /// Absolute tolerance; a coordinate passes if either tolerance holds.
    pub abs_tol: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            h: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinateError {
    pub index: usize,
    pub analytic: f64,
    pub numerical: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub failures: Vec<CoordinateError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} coords checked, max_abs={:.3e}, max_rel={:.3e}, failures={}",
            self.checked,
            self.max_abs_error,
            self.max_rel_error,
            self.failures.len()
        )
    }
}

/// Draws `count` distinct parameter coordinates.
pub fn sample_coords(num_params: usize, count: usize, rng: &mut StdRng) -> Vec<usize> {
    sample(rng, num_params, count.min(num_params)).into_vec()
}

/// Checks the gradients currently stored in `model` against central finite
/// differences of `loss` at the listed coordinates.
///
/// The caller is expected to have populated the gradients with a single
/// backward pass of the same objective before calling this.
pub fn check_gradients<P: Parameterized + ?Sized>(
    model: &mut P,
    coords: &[usize],
    mut loss: impl FnMut(&P) -> f64,
    settings: GradCheckSettings,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        checked: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    for &idx in coords {
        let original = model.param_get(idx);
        model.param_set(idx, original + settings.h);
        let f_plus = loss(model);
        model.param_set(idx, original - settings.h);
        let f_minus = loss(model);
        model.param_set(idx, original);

        let numerical = (f_plus - f_minus) / (2.0 * settings.h);
        let analytic = model.grad_get(idx);
        let abs_error = (analytic - numerical).abs();
        let rel_error = if numerical.abs() > 1e-10 {
            abs_error / numerical.abs()
        } else {
            abs_error
        };
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs_error);
        report.max_rel_error = report.max_rel_error.max(rel_error);
        if abs_error > settings.abs_tol && rel_error > settings.rel_tol {
            report.failures.push(CoordinateError {
                index: idx,
                analytic,
                numerical,
                abs_error,
                rel_error,
            });
        }
    }
    report
}
