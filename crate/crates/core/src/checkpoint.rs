//! Versioned binary parameter files.
//!
//! Layout (little-endian): magic `HPCK`, u32 version, u32 length plus the
//! JSON model config, u32 block count, then per block a u32-length-prefixed
//! UTF-8 name, u32 rows, u32 cols and `rows·cols` f64 values.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{ModelConfig, ModelParams};
use crate::tensor::{RngStream, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"HPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("checkpoint config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("block `{name}`: expected {expected}, found {found}")]
    Block {
        name: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    let config = serde_json::to_vec(&params.config).expect("config serializes");
    put_u32(&mut out, config.len());
    out.extend_from_slice(&config);
    let blocks = params.named();
    put_u32(&mut out, blocks.len());
    for (name, t) in blocks {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows());
        put_u32(&mut out, t.cols());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let n = r.u32()?;
    let config: ModelConfig = serde_json::from_slice(r.take(n)?)?;
    let mut params = ModelParams::init(config, &mut RngStream::new(0))?;
    let expected: Vec<(String, [usize; 2])> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape()))
        .collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(CheckpointError::Format(format!(
            "{count} blocks, model has {}",
            expected.len()
        )));
    }
    for ((want_name, want_shape), slot) in expected.into_iter().zip(params.tensors_mut()) {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Format("block name is not UTF-8".into()))?;
        let shape = [r.u32()?, r.u32()?];
        if name != want_name || shape != want_shape {
            return Err(CheckpointError::Block {
                name: want_name,
                expected: format!("{want_shape:?}"),
                found: format!("`{name}` {shape:?}"),
            });
        }
        let raw = r.take(shape[0] * shape[1] * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        *slot = Tensor::from_vec(shape[0], shape[1], data)?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Format("trailing bytes".into()));
    }
    Ok(params)
}

pub fn write_checkpoint(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            input_dim: 5,
            hidden_dims: [4, 3],
            head_dim: 2,
            ..ModelConfig::default()
        };
        ModelParams::init(cfg, &mut RngStream::new(8)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        let bytes = encode_checkpoint(&p);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), p);
        assert_eq!(encode_checkpoint(&p), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hpck");
        let p = params();
        write_checkpoint(&p, &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode_checkpoint(&params());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(CheckpointError::Format(_))
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Format(_))
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
