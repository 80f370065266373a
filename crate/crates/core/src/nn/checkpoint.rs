//! Binary checkpoints.
//!
//! Layout (little-endian): `MSTW`, version byte, nine u32 model sizes, the
//! 32-byte hash of the normalization sidecar, u32 epoch, u64 optimizer step,
//! u8 moments flag, then the parameter tensors (and, when flagged, the two
//! Adam moment sets) as `u32 name length, name, u32 rank, u32 dims, f32
//! values`, and finally a CRC32 of everything before it.

use std::path::Path;

use thiserror::Error;

use super::adam::AdamState;
use super::params::{ModelConfig, ModelParams, Tensor};

pub const MAGIC: &[u8; 4] = b"MSTW";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("tensor `{name}` does not match the model layout")]
    Layout { name: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid utf-8 in tensor name")]
    InvalidUtf8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    /// SHA-256 of the normalization statistics the model was trained with.
    pub stats_hash: [u8; 32],
    pub epoch: u32,
    pub optimizer: Option<AdamState<f32>>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensors(out: &mut Vec<u8>, params: &ModelParams<f32>) {
    for t in &params.tensors {
        put_u32(out, t.name.len() as u32);
        out.extend_from_slice(t.name.as_bytes());
        put_u32(out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(out, d as u32);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let cfg = &ckpt.params.config;
    let mut out = Vec::with_capacity(64 + 4 * ckpt.params.num_values());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [
        cfg.fields,
        cfg.height,
        cfg.width,
        cfg.window,
        cfg.conv1_out,
        cfg.conv2_out,
        cfg.kernel,
        cfg.lstm_hidden,
        cfg.lstm_layers,
    ] {
        put_u32(&mut out, v as u32);
    }
    out.extend_from_slice(&ckpt.stats_hash);
    put_u32(&mut out, ckpt.epoch);
    let step = ckpt.optimizer.as_ref().map_or(0, |o| o.step);
    out.extend_from_slice(&step.to_le_bytes());
    out.push(ckpt.optimizer.is_some() as u8);
    put_tensors(&mut out, &ckpt.params);
    if let Some(opt) = &ckpt.optimizer {
        put_tensors(&mut out, &opt.m);
        put_tensors(&mut out, &opt.v);
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensors(&mut self, config: ModelConfig) -> Result<ModelParams<f32>, CheckpointError> {
        let mut params = ModelParams::<f32>::zeros(config);
        for slot in params.tensors.iter_mut() {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?).map_err(|_| CheckpointError::InvalidUtf8)?;
            let rank = self.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(self.u32()? as usize);
            }
            if name != slot.name || shape != slot.shape {
                return Err(CheckpointError::Layout { name: name.to_owned() });
            }
            let raw = self.take(4 * slot.len())?;
            *slot = Tensor {
                name: slot.name.clone(),
                shape,
                data: raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            };
        }
        Ok(params)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 5 {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            CheckpointError::BadMagic
        } else {
            CheckpointError::Truncated
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(CheckpointError::UnsupportedVersion(bytes[4]));
    }
    if bytes.len() < 9 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 5 };
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let config = ModelConfig {
        fields: dims[0],
        height: dims[1],
        width: dims[2],
        window: dims[3],
        conv1_out: dims[4],
        conv2_out: dims[5],
        kernel: dims[6],
        lstm_hidden: dims[7],
        lstm_layers: dims[8],
    };
    config.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;
    let stats_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let epoch = r.u32()?;
    let step = r.u64()?;
    let has_moments = r.take(1)?[0] != 0;
    let params = r.tensors(config)?;
    let optimizer = if has_moments {
        let m = r.tensors(config)?;
        let v = r.tensors(config)?;
        Some(AdamState { m, v, step })
    } else {
        None
    };
    if r.pos != body.len() {
        return Err(CheckpointError::Layout {
            name: "<trailing bytes>".into(),
        });
    }
    Ok(Checkpoint {
        params,
        stats_hash,
        epoch,
        optimizer,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
