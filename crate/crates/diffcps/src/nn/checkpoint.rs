//! Flat, versioned text checkpoints.
//!
//! Layout:
//!
//! ```text
//! diffcps-checkpoint v1
//! meta <key> <value>
//! ...
//! tensor <dim0> [dim1]
//! <one line of values per row>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest-round-trip float formatting, so a
//! save/load cycle reproduces every `f64` bit-exactly. Tensors are stored in
//! the owner's canonical order and validated against the receiver's shapes on
//! load.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::mlp::Parameterized;

const HEADER: &str = "diffcps-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// An architecture-agnostic bag of metadata and tensors.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    meta: Vec<(String, String)>,
    tensors: Vec<TensorData>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Metadata value parsed to `T`, as a checkpoint error when missing or bad.
    pub fn meta_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("meta key `{key}` has invalid value `{raw}`")))
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    /// Appends every tensor of `params` in canonical order.
    pub fn push_params<P: Parameterized + ?Sized>(&mut self, params: &P) {
        for t in params.tensors() {
            self.tensors.push(TensorData {
                shape: t.shape().to_vec(),
                values: t.values().to_vec(),
            });
        }
    }

    /// Fills `params` from consecutive tensors starting at `*cursor`,
    /// validating shapes, and advances the cursor.
    pub fn read_params_into<P: Parameterized + ?Sized>(
        &self,
        cursor: &mut usize,
        params: &mut P,
    ) -> Result<()> {
        for t in params.tensors_mut() {
            let stored = self.tensors.get(*cursor).ok_or_else(|| {
                Error::Checkpoint("checkpoint has fewer tensors than the architecture needs".into())
            })?;
            if stored.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} shape mismatch: checkpoint has {:?}, architecture expects {:?}",
                    *cursor,
                    stored.shape,
                    t.shape()
                )));
            }
            t.values_mut().copy_from_slice(&stored.values);
            *cursor += 1;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").expect("string write");
        }
        for t in &self.tensors {
            out.push_str("tensor");
            for d in &t.shape {
                write!(out, " {d}").expect("string write");
            }
            out.push('\n');
            let row_len = *t.shape.last().unwrap_or(&t.values.len().max(1));
            for row in t.values.chunks(row_len.max(1)) {
                let mut first = true;
                for v in row {
                    if !v.is_finite() {
                        return Err(Error::Checkpoint(format!(
                            "refusing to save non-finite value {v}"
                        )));
                    }
                    if !first {
                        out.push(' ');
                    }
                    write!(out, "{v}").expect("string write");
                    first = false;
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if lines.next() != Some(HEADER) {
            return Err(bad("missing or unsupported header"));
        }
        let mut ckpt = Checkpoint::new();
        let mut saw_end = false;
        while let Some(line) = lines.next() {
            if line == "end" {
                saw_end = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad("malformed meta line"))?;
                ckpt.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor") {
                let shape: Vec<usize> = rest
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad("malformed tensor shape")))
                    .collect::<Result<_>>()?;
                if shape.is_empty() {
                    return Err(bad("tensor with empty shape"));
                }
                let total: usize = shape.iter().product();
                let row_len = *shape.last().expect("nonempty shape");
                let rows = if row_len == 0 { 0 } else { total / row_len };
                let mut values = Vec::with_capacity(total);
                for _ in 0..rows {
                    let row = lines.next().ok_or_else(|| bad("truncated tensor data"))?;
                    for tok in row.split_whitespace() {
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| bad(&format!("invalid float `{tok}`")))?;
                        values.push(v);
                    }
                }
                if values.len() != total {
                    return Err(bad("tensor value count does not match its shape"));
                }
                ckpt.tensors.push(TensorData { shape, values });
            } else {
                return Err(bad("unrecognized line"));
            }
        }
        if !saw_end {
            return Err(bad("missing end marker (truncated file)"));
        }
        Ok(ckpt)
    }
}
