//! Resumable training checkpoints.
//!
//! Layout: `b"HBFCKPT\0"`, `u32` version, `u64` length of a JSON block with
//! the configuration and scalar state, then a `u32` tensor count followed by
//! named tensors (`u32` name length, UTF-8 name, `u32` rank, `u64` dims,
//! `f64` data), all little-endian. Tensor names carry a prefix: `param/`,
//! `best/`, `m/` or `v/`.

use std::path::Path;

use hbf_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::learner::features::Standardizer;
use crate::learner::infer::Model;
use crate::learner::network::{NetworkSpec, ParamSet};
use crate::learner::objective::Objective;
use crate::learner::optim::{AdamW, AdamWConfig, Plateau};
use crate::learner::train::{MetricsRow, TrainConfig, TrainState};

const MAGIC: &[u8; 8] = b"HBFCKPT\0";
const VERSION: u32 = 1;
const PREFIXES: [&str; 4] = ["param/", "best/", "m/", "v/"];

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    objective: Objective,
    spec: NetworkSpec,
    standardizer: Standardizer,
    epoch: usize,
    best_val_loss: Option<f64>,
    best_epoch: Option<usize>,
    adamw: AdamWConfig,
    adam_step: u64,
    scheduler: Plateau,
    history: Vec<MetricsRow>,
}

pub fn to_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let meta = Meta {
        config: state.config.clone(),
        objective: state.model.objective,
        spec: state.model.spec.clone(),
        standardizer: state.model.standardizer.clone(),
        epoch: state.epoch,
        best_val_loss: state.best_val_loss,
        best_epoch: state.best_epoch,
        adamw: state.optimizer.config,
        adam_step: state.optimizer.step,
        scheduler: state.scheduler,
        history: state.history.clone(),
    };
    let json = serde_json::to_vec(&meta)
        .map_err(|e| CoreError::Contract(format!("checkpoint metadata: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let sets = [
        &state.model.params,
        &state.best,
        &state.optimizer.m,
        &state.optimizer.v,
    ];
    let count: usize = sets.iter().map(|s| s.tensors.len()).sum();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (prefix, set) in PREFIXES.iter().zip(sets) {
        for (name, t) in set.names.iter().zip(&set.tensors) {
            let full = format!("{prefix}{name}");
            out.extend_from_slice(&(full.len() as u32).to_le_bytes());
            out.extend_from_slice(full.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> CoreError {
        CoreError::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| self.err(format!("{what} {v} is too large")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.err("not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let json_len = r.len("metadata length")?;
    let start = r.pos;
    let meta: Meta = serde_json::from_slice(r.take(json_len, "metadata")?).map_err(|e| {
        CoreError::Format {
            offset: start as u64,
            message: format!("metadata: {e}"),
        }
    })?;

    let count = r.u32("tensor count")? as usize;
    let mut sets: Vec<ParamSet> = (0..4)
        .map(|_| ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        })
        .collect();
    for _ in 0..count {
        let at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| CoreError::Format {
                offset: at as u64,
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.len("dimension")?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| r.err(format!("tensor {name} is too large")))?;
        let data = r
            .take(n, &name)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let slot = PREFIXES
            .iter()
            .position(|p| name.starts_with(p))
            .ok_or_else(|| CoreError::Format {
                offset: at as u64,
                message: format!("unknown tensor {name}"),
            })?;
        sets[slot].names.push(name[PREFIXES[slot].len()..].to_string());
        sets[slot].tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after last tensor"));
    }
    for set in &sets {
        set.check(&meta.spec)?;
    }
    let v = sets.pop().unwrap();
    let m = sets.pop().unwrap();
    let best = sets.pop().unwrap();
    let params = sets.pop().unwrap();
    Ok(TrainState {
        config: meta.config,
        model: Model {
            spec: meta.spec,
            params,
            standardizer: meta.standardizer,
            objective: meta.objective,
        },
        best,
        best_val_loss: meta.best_val_loss,
        best_epoch: meta.best_epoch,
        optimizer: AdamW {
            config: meta.adamw,
            step: meta.adam_step,
            m,
            v,
        },
        scheduler: meta.scheduler,
        epoch: meta.epoch,
        history: meta.history,
    })
}

pub fn save(state: &TrainState, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(state)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainState> {
    from_bytes(&std::fs::read(path)?)
}
