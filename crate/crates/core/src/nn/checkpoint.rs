//! Checkpoint container.
//!
//! Layout: one line of compact JSON (the [`CheckpointHeader`]) terminated by
//! `\n`, followed by every tensor listed in the header, in header order, as
//! little-endian `f32` values.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Param, Scalar};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "sqd-unwrap-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    /// Architecture description stored alongside the weights.
    pub arch: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut out: W,
    arch: serde_json::Value,
    params: &[&Param<T>],
) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dtype: "f32".into(),
        arch,
        tensors: params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                trainable: p.trainable,
            })
            .collect(),
    };
    let io = |e| Error::io("writing checkpoint", e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    let mut buf = Vec::new();
    for p in params {
        buf.clear();
        for v in &p.value {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a checkpoint, returning the header and one value vector per tensor.
pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<(CheckpointHeader, Vec<Vec<f32>>)> {
    let mut line = Vec::new();
    input
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io("reading checkpoint header", e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if header.dtype != "f32" {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", header.dtype)));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let len: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        input.read_exact(&mut bytes).map_err(|_| {
            Error::Checkpoint(format!("truncated data for tensor {}", entry.name))
        })?;
        tensors.push(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        );
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::io("reading checkpoint", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok((header, tensors))
}
