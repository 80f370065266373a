//! Little-endian binary container for sequence collections and the
//! normalization-statistics sidecar.
//!
//! Container layout:
//! - magic `b"MSTM"`, version byte `0x01`
//! - `u32` sequence count
//! - per sequence: `u32` T, F, H, W; `f32` frame interval; `u32` metadata
//!   count followed by (`u32` byte length, UTF-8 key, `f64` value) pairs;
//!   then T*F*H*W `f32` values in (t, f, i, j) row-major order
//!
//! Sidecar layout: magic `b"MSTN"`, `u32` F, then F pairs of `f64` (min, max).

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{FieldFrame, FieldRange, FrameShape, NormStats, Sequence};

pub const CONTAINER_MAGIC: &[u8; 4] = b"MSTM";
pub const CONTAINER_VERSION: u8 = 0x01;
pub const STATS_MAGIC: &[u8; 4] = b"MSTN";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated payload: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("shape inconsistency: {0}")]
    Shape(String),
    #[error("metadata key is not valid UTF-8 at offset {0}")]
    InvalidUtf8(usize),
    #[error("non-finite value in payload of sequence {sequence}")]
    NonFinite { sequence: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
}

impl ContainerError {
    /// Stable numeric code, one per failure class.
    pub fn code(&self) -> u8 {
        match self {
            ContainerError::Io(_) => 1,
            ContainerError::BadMagic { .. } => 2,
            ContainerError::UnsupportedVersion(_) => 3,
            ContainerError::Truncated { .. } => 4,
            ContainerError::Shape(_) => 5,
            ContainerError::InvalidUtf8(_) => 6,
            ContainerError::NonFinite { .. } => 7,
            ContainerError::TrailingBytes(_) => 8,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ContainerError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, ContainerError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), ContainerError> {
        let found: [u8; 4] = self.array()?;
        if &found != expected {
            return Err(ContainerError::BadMagic {
                expected: *expected,
                found,
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<(), ContainerError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(ContainerError::TrailingBytes(n)),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("count exceeds u32").to_le_bytes());
}

pub fn encode_container(sequences: &[Sequence]) -> Vec<u8> {
    let payload: usize = sequences
        .iter()
        .map(|s| 24 + s.len() * s.shape().len() * 4)
        .sum();
    let mut out = Vec::with_capacity(9 + payload);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.push(CONTAINER_VERSION);
    put_u32(&mut out, sequences.len());
    for seq in sequences {
        let shape = seq.shape();
        put_u32(&mut out, seq.len());
        put_u32(&mut out, shape.fields);
        put_u32(&mut out, shape.height);
        put_u32(&mut out, shape.width);
        out.extend_from_slice(&seq.frame_interval.to_le_bytes());
        put_u32(&mut out, seq.params.len());
        for (key, value) in &seq.params {
            put_u32(&mut out, key.len());
            out.extend_from_slice(key.as_bytes());
            out.extend_from_slice(&value.to_le_bytes());
        }
        for frame in &seq.frames {
            for v in frame.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<Sequence>, ContainerError> {
    let mut cur = Cursor::new(bytes);
    cur.magic(CONTAINER_MAGIC)?;
    let version = cur.u8()?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let count = cur.u32()? as usize;
    let mut sequences = Vec::with_capacity(count.min(1 << 16));
    let mut dataset_shape: Option<FrameShape> = None;
    for index in 0..count {
        let frames_len = cur.u32()? as usize;
        let shape = FrameShape::new(
            cur.u32()? as usize,
            cur.u32()? as usize,
            cur.u32()? as usize,
        );
        if shape.is_empty() {
            return Err(ContainerError::Shape(format!(
                "sequence {index} has degenerate frame shape {shape}"
            )));
        }
        match dataset_shape {
            Some(s) if s != shape => {
                return Err(ContainerError::Shape(format!(
                    "sequence {index} has shape {shape} but the dataset uses {s}"
                )))
            }
            _ => dataset_shape = Some(shape),
        }
        let frame_interval = cur.f32()?;
        let n_params = cur.u32()? as usize;
        let mut params = Vec::with_capacity(n_params.min(1024));
        for _ in 0..n_params {
            let key_len = cur.u32()? as usize;
            let at = cur.pos;
            let key = std::str::from_utf8(cur.take(key_len)?)
                .map_err(|_| ContainerError::InvalidUtf8(at))?
                .to_owned();
            params.push((key, cur.f64()?));
        }
        let frame_bytes = shape
            .len()
            .checked_mul(4)
            .ok_or_else(|| ContainerError::Shape(format!("frame shape {shape} overflows")))?;
        let mut frames = Vec::with_capacity(frames_len.min(4096));
        for _ in 0..frames_len {
            let raw = cur.take(frame_bytes)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let frame = FieldFrame::new(shape, data)
                .map_err(|_| ContainerError::NonFinite { sequence: index })?;
            frames.push(frame);
        }
        let seq = Sequence::with_shape(shape, frames, params, frame_interval)
            .map_err(|e| ContainerError::Shape(e.to_string()))?;
        sequences.push(seq);
    }
    cur.finish()?;
    Ok(sequences)
}

pub fn write_container(path: impl AsRef<Path>, sequences: &[Sequence]) -> Result<(), ContainerError> {
    fs::write(path, encode_container(sequences))?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Vec<Sequence>, ContainerError> {
    decode_container(&fs::read(path)?)
}

pub fn encode_norm_stats(stats: &NormStats) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * stats.ranges.len());
    out.extend_from_slice(STATS_MAGIC);
    put_u32(&mut out, stats.ranges.len());
    for r in &stats.ranges {
        out.extend_from_slice(&r.min.to_le_bytes());
        out.extend_from_slice(&r.max.to_le_bytes());
    }
    out
}

pub fn decode_norm_stats(bytes: &[u8]) -> Result<NormStats, ContainerError> {
    let mut cur = Cursor::new(bytes);
    cur.magic(STATS_MAGIC)?;
    let n = cur.u32()? as usize;
    let mut ranges = Vec::with_capacity(n.min(1024));
    for k in 0..n {
        let range = FieldRange {
            min: cur.f64()?,
            max: cur.f64()?,
        };
        if !(range.max >= range.min) {
            return Err(ContainerError::Shape(format!(
                "field {k} has max {} below min {}",
                range.max, range.min
            )));
        }
        ranges.push(range);
    }
    cur.finish()?;
    Ok(NormStats { ranges })
}

pub fn write_norm_stats(path: impl AsRef<Path>, stats: &NormStats) -> Result<(), ContainerError> {
    fs::write(path, encode_norm_stats(stats))?;
    Ok(())
}

pub fn read_norm_stats(path: impl AsRef<Path>) -> Result<NormStats, ContainerError> {
    decode_norm_stats(&fs::read(path)?)
}
