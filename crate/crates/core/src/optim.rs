//! Named parameters, Adam, and the binary checkpoint format.
//!
//! A checkpoint is one JSON header line followed by the parameters as
//! little-endian `f64`, in header order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Gradients, NumericError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint payload has {got} bytes, header requires {want}")]
    Truncated { got: usize, want: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    value: Tensor,
    m: Tensor,
    v: Tensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let [r, c] = value.shape();
        self.params.insert(
            name.into(),
            Slot {
                value,
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
            },
        );
    }

    /// Xavier-uniform weight matrix of shape `fan_in×fan_out`.
    pub fn insert_xavier(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let t = Tensor::new(fan_in, fan_out, data).expect("xavier shape");
        self.insert(name, t);
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(rows, cols));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name).map(|s| &mut s.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Puts every parameter on the tape as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, s)| (k.clone(), tape.param(s.value.clone())))
                .collect(),
        }
    }

    /// Standard Adam update with bias correction.
    pub fn adam_step(
        &mut self,
        grads: &BTreeMap<String, Tensor>,
        cfg: &AdamConfig,
    ) -> Result<(), NumericError> {
        for name in self.params.keys() {
            match grads.get(name) {
                Some(g) if g.shape() == self.params[name].value.shape() => {}
                Some(g) => {
                    return Err(NumericError::ShapeMismatch {
                        op: "adam_step",
                        left: self.params[name].value.shape(),
                        right: g.shape(),
                    })
                }
                None => return Err(NumericError::MissingGrad(name.clone())),
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, slot) in self.params.iter_mut() {
            let g = grads[name].data();
            let w = slot.value.data_mut();
            let m = slot.m.data_mut();
            let v = slot.v.data_mut();
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            if !slot.value.is_finite() {
                return Err(NumericError::NonFiniteValue { op: "adam_step" });
            }
        }
        Ok(())
    }

    /// Writes values only; optimizer moments are not persisted.
    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes(meta)?)?;
        Ok(())
    }

    pub fn to_bytes(&self, meta: serde_json::Value) -> Result<Vec<u8>, CheckpointError> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            names: self.params.keys().cloned().collect(),
            shapes: self.params.values().map(|s| s.value.shape()).collect(),
            meta,
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for slot in self.params.values() {
            for x in slot.value.data() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value), CheckpointError> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(ParamStore, serde_json::Value), CheckpointError> {
        let mut reader = BufReader::new(bytes);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let want: usize = header.shapes.iter().map(|[r, c]| r * c * 8).sum();
        if payload.len() != want {
            return Err(CheckpointError::Truncated {
                got: payload.len(),
                want,
            });
        }
        let mut store = ParamStore::new();
        let mut offset = 0;
        for (name, [r, c]) in header.names.into_iter().zip(header.shapes) {
            let data = payload[offset..offset + r * c * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            offset += r * c * 8;
            store.insert(name, Tensor::new(r, c, data)?);
        }
        Ok((store, header.meta))
    }
}

pub const CHECKPOINT_FORMAT: &str = "grag-ckpt/1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    names: Vec<String>,
    shapes: Vec<[usize; 2]>,
    meta: serde_json::Value,
}

/// Parameters bound to a tape for one forward pass.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn var(&self, name: &str) -> Var<'t> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn try_var(&self, name: &str) -> Option<Var<'t>> {
        self.vars.get(name).copied()
    }

    /// Pulls the gradient of every bound parameter out of `grads`.
    pub fn collect(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter_map(|(k, v)| grads.get(*v).map(|g| (k.clone(), g.clone())))
            .collect()
    }
}
