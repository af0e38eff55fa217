//! Offline transition datasets: the noisy-circle bandit generator and a
//! line-oriented text container with lossless round-trips.
//!
//! File layout:
//!
//! ```text
//! offline-dataset v1 state_dim=S action_dim=A count=N generator=NAME seed=SEED
//! <state..> <action..> <reward> <next_state..> <done 0|1>
//! ...
//! ```
//!
//! Floats are written with shortest-round-trip formatting so every `f64`
//! survives a save/load cycle bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One `(s, a, r, s', done)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Provenance carried alongside the transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
}

/// An immutable offline dataset. Construction validates dimensional
/// consistency; there is no mutation API after that.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    transitions: Vec<Transition>,
    state_dim: usize,
    action_dim: usize,
    meta: DatasetMeta,
}

impl OfflineDataset {
    pub fn new(transitions: Vec<Transition>, meta: DatasetMeta) -> Result<OfflineDataset> {
        let first = transitions
            .first()
            .ok_or_else(|| Error::Config("dataset must contain at least one transition".into()))?;
        let state_dim = first.state.len();
        let action_dim = first.action.len();
        for (idx, t) in transitions.iter().enumerate() {
            if t.state.len() != state_dim
                || t.next_state.len() != state_dim
                || t.action.len() != action_dim
            {
                return Err(Error::Config(format!(
                    "transition {idx} has inconsistent dimensions"
                )));
            }
        }
        Ok(OfflineDataset {
            transitions,
            state_dim,
            action_dim,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.transitions[idx]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(
            out,
            "offline-dataset v1 state_dim={} action_dim={} count={} generator={} seed={}",
            self.state_dim,
            self.action_dim,
            self.len(),
            self.meta.generator,
            self.meta.seed
        )
        .expect("string write");
        for t in &self.transitions {
            let mut fields: Vec<String> = Vec::with_capacity(2 * self.state_dim + self.action_dim + 2);
            fields.extend(t.state.iter().map(|v| v.to_string()));
            fields.extend(t.action.iter().map(|v| v.to_string()));
            fields.push(t.reward.to_string());
            fields.extend(t.next_state.iter().map(|v| v.to_string()));
            fields.push(if t.done { "1".into() } else { "0".into() });
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<OfflineDataset> {
        let text = fs::read_to_string(path)?;
        let parse_err = |record: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            record,
            msg: msg.to_string(),
        };

        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("offline-dataset") || tokens.next() != Some("v1") {
            return Err(parse_err(0, "missing `offline-dataset v1` header"));
        }
        let mut header_kv = std::collections::HashMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(0, "malformed header field"))?;
            header_kv.insert(k.to_string(), v.to_string());
        }
        let get_usize = |k: &str| -> Result<usize> {
            header_kv
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(0, &format!("header needs integer field `{k}`")))
        };
        let state_dim = get_usize("state_dim")?;
        let action_dim = get_usize("action_dim")?;
        let count = get_usize("count")?;
        let generator = header_kv.get("generator").cloned().unwrap_or_default();
        let seed: u64 = header_kv
            .get("seed")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);

        let expected_fields = 2 * state_dim + action_dim + 2;
        let mut transitions = Vec::with_capacity(count);
        for (idx, line) in lines.enumerate() {
            let record = idx + 1;
            if record > count {
                return Err(parse_err(record, "more records than the header count"));
            }
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != expected_fields {
                return Err(parse_err(
                    record,
                    &format!("expected {expected_fields} fields, found {}", vals.len()),
                ));
            }
            let mut floats = Vec::with_capacity(expected_fields - 1);
            for tok in &vals[..expected_fields - 1] {
                floats.push(
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(record, &format!("invalid float `{tok}`")))?,
                );
            }
            let done = match vals[expected_fields - 1] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(record, &format!("invalid done flag `{other}`"))),
            };
            let state = floats[..state_dim].to_vec();
            let action = floats[state_dim..state_dim + action_dim].to_vec();
            let reward = floats[state_dim + action_dim];
            let next_state = floats[state_dim + action_dim + 1..].to_vec();
            transitions.push(Transition {
                state,
                action,
                reward,
                next_state,
                done,
            });
        }
        if transitions.len() != count {
            return Err(parse_err(
                transitions.len() + 1,
                &format!("truncated file: header promises {count} records, found {}", transitions.len()),
            ));
        }
        OfflineDataset::new(
            transitions,
            DatasetMeta {
                generator,
                seed,
            },
        )
    }
}

/// Samples the 2-D noisy-circle bandit dataset: angles uniform on `[0, 2pi)`,
/// isotropic Gaussian noise of scale `sigma` added per coordinate, constant
/// one-dimensional zero state, reward 1 and `done = 1` on every transition.
///
/// Draw order per transition: angle, then the two noise components.
pub fn make_noisy_circle(n: usize, sigma: f64, seed: u64) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::Config("noisy circle needs n >= 1".into()));
    }
    if sigma < 0.0 {
        return Err(Error::Config(format!("noise scale must be >= 0, got {sigma}")));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        transitions.push(Transition {
            state: vec![0.0],
            action: vec![phi.cos() + sigma * nx, phi.sin() + sigma * ny],
            reward: 1.0,
            next_state: vec![0.0],
            done: true,
        });
    }
    OfflineDataset::new(
        transitions,
        DatasetMeta {
            generator: "noisy-circle".into(),
            seed,
        },
    )
}
