//! Variance-preserving noise schedules.

use crate::error::{Error, Result};

/// Discrete noise schedule over steps `i = 1..=T`.
///
/// Stores the per-step noise fractions `beta_i`, the retained fractions
/// `alpha_i = 1 - beta_i` and their running products `alpha_bar_i`, with
/// `alpha_bar_0 = 1` by convention. `alpha_bar` is strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    /// `alpha_bar[i]` is the product of `alpha_1..=alpha_i`; entry 0 is 1.
    alpha_bar: Vec<f64>,
    beta_min: f64,
    beta_max: f64,
}

impl NoiseSchedule {
    /// Variance-preserving schedule:
    ///
    /// `beta_i = 1 - exp(-beta_min/T - 0.5 (beta_max - beta_min) (2i-1)/T^2)`
    ///
    /// for `i = 1..=T`. Requires `0 < beta_min < beta_max` and `T >= 1`.
    pub fn vp(t_steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
        if t_steps == 0 {
            return Err(Error::Config("diffusion step count T must be >= 1".into()));
        }
        if !(beta_min > 0.0 && beta_min < beta_max) {
            return Err(Error::Config(format!(
                "schedule endpoints must satisfy 0 < beta_min < beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        let t = t_steps as f64;
        let beta: Vec<f64> = (1..=t_steps)
            .map(|i| {
                let i = i as f64;
                1.0 - (-beta_min / t - 0.5 * (beta_max - beta_min) * (2.0 * i - 1.0) / (t * t)).exp()
            })
            .collect();
        Self::from_betas_with_endpoints(beta, beta_min, beta_max)
    }

    /// Builds a schedule from explicit `beta_i` values, each in (0, 1).
    pub fn from_betas(beta: Vec<f64>) -> Result<NoiseSchedule> {
        Self::from_betas_with_endpoints(beta, f64::NAN, f64::NAN)
    }

    fn from_betas_with_endpoints(beta: Vec<f64>, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
        if beta.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if beta.iter().any(|&b| !(0.0 < b && b < 1.0)) {
            return Err(Error::Config("every beta_i must lie in (0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len() + 1);
        alpha_bar.push(1.0);
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            beta_min,
            beta_max,
        })
    }

    pub fn t_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    /// `beta_i` for `i = 1..=T`.
    pub fn beta(&self, i: usize) -> f64 {
        self.check_step(i);
        self.beta[i - 1]
    }

    /// `alpha_i` for `i = 1..=T`.
    pub fn alpha(&self, i: usize) -> f64 {
        self.check_step(i);
        self.alpha[i - 1]
    }

    /// `alpha_bar_i` for `i = 0..=T` (`alpha_bar_0 = 1`).
    pub fn alpha_bar(&self, i: usize) -> f64 {
        assert!(i <= self.t_steps(), "alpha_bar index out of range");
        self.alpha_bar[i]
    }

    fn check_step(&self, i: usize) {
        assert!(
            (1..=self.t_steps()).contains(&i),
            "diffusion step index {i} outside 1..={}",
            self.t_steps()
        );
    }

    fn step_index_checked(&self, i: usize) -> Result<()> {
        if !(1..=self.t_steps()).contains(&i) {
            return Err(Error::Usage(format!(
                "diffusion step index {i} outside 1..={}",
                self.t_steps()
            )));
        }
        Ok(())
    }

    /// Forward (noising) sample in closed form:
    /// `a^i = sqrt(alpha_bar_i) a0 + sqrt(1 - alpha_bar_i) eps`.
    pub fn q_sample(&self, a0: &[f64], i: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.step_index_checked(i)?;
        if a0.len() != eps.len() {
            return Err(Error::Usage("q_sample needs eps with the action dimension".into()));
        }
        let ab = self.alpha_bar(i);
        let (c0, c1) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(a0.iter().zip(eps).map(|(a, e)| c0 * a + c1 * e).collect())
    }

    /// Mean of the reverse step `i -> i-1` given a predicted noise:
    /// `(a^i - beta_i / sqrt(1 - alpha_bar_i) * eps_hat) / sqrt(alpha_i)`.
    pub fn posterior_mean(&self, a_i: &[f64], eps_hat: &[f64], i: usize) -> Result<Vec<f64>> {
        self.step_index_checked(i)?;
        if a_i.len() != eps_hat.len() {
            return Err(Error::Usage("posterior_mean dimension mismatch".into()));
        }
        let coef = self.beta(i) / (1.0 - self.alpha_bar(i)).sqrt();
        let inv = 1.0 / self.alpha(i).sqrt();
        Ok(a_i
            .iter()
            .zip(eps_hat)
            .map(|(a, e)| inv * (a - coef * e))
            .collect())
    }
}
