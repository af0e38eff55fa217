//! Experiment configuration: defaults, a flat `key=value` file format with
//! `#` comments, and override precedence (defaults < config file < flags).
//!
//! The resolved configuration written next to a run's outputs is itself a
//! valid input that reproduces the run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Diffcps,
    Awr,
    DiffusionBc,
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Algo> {
        match s {
            "diffcps" => Ok(Algo::Diffcps),
            "awr" => Ok(Algo::Awr),
            "diffusion-bc" => Ok(Algo::DiffusionBc),
            other => Err(Error::Usage(format!(
                "unknown algorithm `{other}` (expected diffcps, awr or diffusion-bc)"
            ))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Diffcps => "diffcps",
            Algo::Awr => "awr",
            Algo::DiffusionBc => "diffusion-bc",
        })
    }
}

/// The full configuration of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    /// Dataset file path.
    pub data: String,
    /// Output directory.
    pub out: String,
    pub awr_alpha: f64,
    pub awr_weight_clip: f64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algo: Algo::Diffcps,
            data: "ring.ds".into(),
            out: "out".into(),
            awr_alpha: 1.0,
            awr_weight_clip: 20.0,
            train: TrainConfig::default(),
        }
    }
}

/// Uniform hidden stack `[dim; layers]` encoded as two scalar keys.
fn hidden_fields(hidden: &[usize]) -> (usize, usize) {
    let dim = hidden.first().copied().unwrap_or(256);
    (dim, hidden.len())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.awr_alpha >= 0.0) {
            return Err(Error::Config("awr_alpha must be >= 0".into()));
        }
        if !(self.awr_weight_clip > 0.0) {
            return Err(Error::Config("awr_weight_clip must be > 0".into()));
        }
        Ok(())
    }

    /// All fields as `(key, value)` pairs in canonical order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let (hidden_dim, hidden_layers) = hidden_fields(&t.hidden);
        let kv: Vec<(&str, String)> = vec![
            ("algo", self.algo.to_string()),
            ("data", self.data.clone()),
            ("out", self.out.clone()),
            ("seed", t.seed.to_string()),
            ("steps", t.steps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("gamma", t.gamma.to_string()),
            ("eval_interval", t.eval_interval.to_string()),
            ("lr", t.lr.to_string()),
            ("lambda_lr", t.lambda_lr.to_string()),
            ("lambda_init", t.lambda_init.to_string()),
            ("kappa", t.kappa.to_string()),
            ("lambda_clip_floor", t.lambda_clip_floor.to_string()),
            ("dual_enabled", t.dual_enabled.to_string()),
            ("rho", t.rho.to_string()),
            ("t_steps", t.t_steps.to_string()),
            ("beta_min", t.beta_min.to_string()),
            ("beta_max", t.beta_max.to_string()),
            ("max_q_backup", t.max_q_backup.to_string()),
            ("max_q_samples", t.max_q_samples.to_string()),
            ("hidden_dim", hidden_dim.to_string()),
            ("hidden_layers", hidden_layers.to_string()),
            ("metrics_every", t.metrics_every.to_string()),
            ("awr_alpha", self.awr_alpha.to_string()),
            ("awr_weight_clip", self.awr_weight_clip.to_string()),
        ];
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
        }
        let t = &mut self.train;
        match key {
            "algo" => self.algo = value.parse()?,
            "data" => self.data = value.to_string(),
            "out" => self.out = value.to_string(),
            "seed" => t.seed = parse(key, value)?,
            "steps" => t.steps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "eval_interval" => t.eval_interval = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "lambda_lr" => t.lambda_lr = parse(key, value)?,
            "lambda_init" => t.lambda_init = parse(key, value)?,
            "kappa" => t.kappa = parse(key, value)?,
            "lambda_clip_floor" => t.lambda_clip_floor = parse(key, value)?,
            "dual_enabled" => t.dual_enabled = parse(key, value)?,
            "rho" => t.rho = parse(key, value)?,
            "t_steps" => t.t_steps = parse(key, value)?,
            "beta_min" => t.beta_min = parse(key, value)?,
            "beta_max" => t.beta_max = parse(key, value)?,
            "max_q_backup" => t.max_q_backup = parse(key, value)?,
            "max_q_samples" => t.max_q_samples = parse(key, value)?,
            "hidden_dim" => {
                let dim: usize = parse(key, value)?;
                let (_, layers) = hidden_fields(&t.hidden);
                t.hidden = vec![dim; layers.max(1)];
            }
            "hidden_layers" => {
                let layers: usize = parse(key, value)?;
                let (dim, _) = hidden_fields(&t.hidden);
                t.hidden = vec![dim; layers];
            }
            "metrics_every" => t.metrics_every = parse(key, value)?,
            "awr_alpha" => self.awr_alpha = parse(key, value)?,
            "awr_weight_clip" => self.awr_weight_clip = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Renders the flat `key=value` file.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# resolved experiment configuration\n");
        for (k, v) in self.to_key_values() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    /// Applies every assignment in a config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key=value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_the_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.txt");
        let mut cfg = ExperimentConfig::default();
        cfg.algo = Algo::Awr;
        cfg.train.kappa = 0.09;
        cfg.train.hidden = vec![64, 64];
        cfg.train.max_q_backup = true;
        cfg.save(&path).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
    }

    #[test]
    fn precedence_is_defaults_then_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.txt");
        std::fs::write(&path, "# comment line\nkappa=0.2\nsteps=123\n").unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.train.kappa, 0.2);
        assert_eq!(cfg.train.steps, 123);
        // Flag override wins last.
        cfg.set("kappa", "0.31").unwrap();
        assert_eq!(cfg.train.kappa, 0.31);
        // Untouched fields keep their defaults.
        assert_eq!(cfg.train.batch_size, 256);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("steps", "many").is_err());
        assert!(cfg.set("algo", "q-learning").is_err());
    }

    #[test]
    fn hidden_stack_is_reconstructed_from_both_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("hidden_dim", "32").unwrap();
        cfg.set("hidden_layers", "2").unwrap();
        assert_eq!(cfg.train.hidden, vec![32, 32]);
        // Order-independent.
        let mut cfg2 = ExperimentConfig::default();
        cfg2.set("hidden_layers", "2").unwrap();
        cfg2.set("hidden_dim", "32").unwrap();
        assert_eq!(cfg2.train.hidden, vec![32, 32]);
    }
}
