//! `RHC1` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RHC1"  u16 version
//! u32 config_len, config block (see encode_config)
//! u8 has_optimizer [f64 lr, f64 momentum, f64 weight_decay]
//! u32 tensor_count
//! per tensor: u32 name_len, name (UTF-8), u32 rank, rank × u32 dims, f32 data
//! ```
//!
//! Tensors are the parameters, the batch-norm running statistics and, when an
//! optimizer is stored, its velocities under `velocity/<param name>`.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use super::{Model, ModelConfig, ModelError, CONV_LAYERS, FC_LAYERS};
use crate::kernels::{BatchNormConfig, NdArray, OptimizerState, Real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RHC1";
pub const CHECKPOINT_VERSION: u16 = 1;
const VELOCITY_PREFIX: &str = "velocity/";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: bad magic {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("tensor {name}: shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint lacks tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint config is invalid: {0}")]
    Config(#[from] ModelError),
}

/// A model together with the optional optimizer state saved alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub optimizer: Option<OptimizerState<T>>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn encode_config(c: &ModelConfig) -> Vec<u8> {
    let mut b = Vec::new();
    put_u32(&mut b, c.input_size.0);
    put_u32(&mut b, c.input_size.1);
    put_u32(&mut b, c.in_channels);
    for &ch in &c.conv_channels {
        put_u32(&mut b, ch);
    }
    put_u32(&mut b, c.embedding_len);
    put_u32(&mut b, c.delta_t_dim);
    put_u32(&mut b, c.mix_dim);
    for &f in &c.fc_sizes {
        put_u32(&mut b, f);
    }
    for v in [c.leaky_slope, c.batch_norm.eps, c.batch_norm.momentum] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn encode_checkpoint<T: Real>(model: &Model<T>, optimizer: Option<&OptimizerState<T>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = encode_config(model.config());
    put_u32(&mut out, cfg.len());
    out.extend_from_slice(&cfg);
    match optimizer {
        Some(o) => {
            out.push(1);
            for v in [o.learning_rate, o.momentum, o.weight_decay] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => out.push(0),
    }

    let mut tensors: Vec<(String, &NdArray<T>)> = model
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), &p.value))
        .collect();
    tensors.extend(model.buffers());
    if let Some(o) = optimizer {
        for (name, v) in o.velocities() {
            tensors.push((format!("{VELOCITY_PREFIX}{name}"), v));
        }
    }
    put_u32(&mut out, tensors.len());
    for (name, t) in tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn decode_config(block: &[u8]) -> Result<ModelConfig, CheckpointError> {
    let mut r = Reader { buf: block, pos: 0 };
    let h = r.u32("config")?;
    let w = r.u32("config")?;
    let in_channels = r.u32("config")?;
    let mut conv_channels = [0; CONV_LAYERS];
    for c in &mut conv_channels {
        *c = r.u32("config")?;
    }
    let embedding_len = r.u32("config")?;
    let delta_t_dim = r.u32("config")?;
    let mix_dim = r.u32("config")?;
    let mut fc_sizes = [0; FC_LAYERS];
    for f in &mut fc_sizes {
        *f = r.u32("config")?;
    }
    let leaky_slope = r.f64("config")?;
    let eps = r.f64("config")?;
    let momentum = r.f64("config")?;
    if r.pos != block.len() {
        return Err(CheckpointError::Malformed(format!(
            "config block has {} unread bytes",
            block.len() - r.pos
        )));
    }
    Ok(ModelConfig {
        input_size: (h, w),
        in_channels,
        conv_channels,
        embedding_len,
        delta_t_dim,
        mix_dim,
        fc_sizes,
        leaky_slope,
        batch_norm: BatchNormConfig { eps, momentum },
    })
}

type RawTensor = (Vec<usize>, Vec<f32>);

/// Parses a checkpoint and rebuilds it against `expected` (defaults to the
/// configuration stored in the file).
fn decode_with<T: Real>(
    bytes: &[u8],
    expected: Option<&ModelConfig>,
) -> Result<Checkpoint<T>, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let cfg_len = r.u32("config length")?;
    let stored = decode_config(r.take(cfg_len, "config")?)?;
    let optimizer = match r.take(1, "optimizer flag")?[0] {
        0 => None,
        1 => {
            let lr = r.f64("optimizer")?;
            let momentum = r.f64("optimizer")?;
            let wd = r.f64("optimizer")?;
            Some(
                OptimizerState::<T>::new(lr, momentum, wd)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
            )
        }
        other => {
            return Err(CheckpointError::Malformed(format!(
                "optimizer flag must be 0 or 1, got {other}"
            )))
        }
    };

    let count = r.u32("tensor count")?;
    let mut raw: Vec<(String, RawTensor)> = Vec::with_capacity(count);
    for i in 0..count {
        let ctx = format!("tensor #{i}");
        let name_len = r.u32(&ctx)?;
        let name = std::str::from_utf8(r.take(name_len, &ctx)?)
            .map_err(|_| CheckpointError::Malformed(format!("{ctx} name is not UTF-8")))?
            .to_string();
        let ctx = format!("tensor {name}");
        let rank = r.u32(&ctx)?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32(&ctx)?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("{ctx} shape overflows")))?;
        let bytes_needed = len
            .checked_mul(4)
            .ok_or_else(|| CheckpointError::Malformed(format!("{ctx} shape overflows")))?;
        let data = r
            .take(bytes_needed, &ctx)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        raw.push((name, (shape, data)));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }

    let mut by_name: HashMap<String, RawTensor> = HashMap::with_capacity(raw.len());
    for (name, t) in raw {
        if by_name.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate tensor {name}")));
        }
    }

    let config = expected.cloned().unwrap_or(stored);
    let mut model = Model::<T>::build(&config, 0)?;
    fn fill<T: Real>(
        by_name: &mut HashMap<String, RawTensor>,
        name: &str,
        target: &mut NdArray<T>,
    ) -> Result<(), CheckpointError> {
        let (shape, data) = by_name
            .remove(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        if shape != target.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: target.shape().to_vec(),
                found: shape,
            });
        }
        for (dst, &v) in target.data_mut().iter_mut().zip(&data) {
            *dst = T::lit(v as f64);
        }
        Ok(())
    }
    for p in model.params_mut() {
        let name = p.name.clone();
        fill(&mut by_name, &name, &mut p.value)?;
    }
    for (name, buf) in model.buffers_mut() {
        fill(&mut by_name, &name, buf)?;
    }

    let mut optimizer = optimizer;
    if let Some(opt) = optimizer.as_mut() {
        let mut velocities = Vec::new();
        for p in model.params() {
            let key = format!("{VELOCITY_PREFIX}{}", p.name);
            if !by_name.contains_key(&key) {
                continue;
            }
            let mut v = NdArray::zeros(p.value.shape());
            fill(&mut by_name, &key, &mut v)?;
            velocities.push((p.name.clone(), v));
        }
        opt.set_velocities(velocities);
    }
    if let Some(name) = by_name.keys().min() {
        return Err(CheckpointError::UnexpectedTensor(name.clone()));
    }
    Ok(Checkpoint { model, optimizer })
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>, CheckpointError> {
    decode_with(bytes, None)
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    model: &Model<T>,
    optimizer: Option<&OptimizerState<T>>,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(model, optimizer))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Loads a checkpoint into a model built from `expected`; any tensor whose
/// stored shape differs yields [`CheckpointError::ShapeMismatch`].
pub fn load_checkpoint_expecting<T: Real>(
    path: &Path,
    expected: &ModelConfig,
) -> Result<Checkpoint<T>, CheckpointError> {
    decode_with(&std::fs::read(path)?, Some(expected))
}
