//! Versioned binary checkpoint container.
//!
//! Layout (little endian):
//! `b"SMCK"` | version u32 | header length u64 | JSON header | f64 tensor
//! data in header order | SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::masking::{Tokenizer, TokenizerMode, Vocabulary};
use crate::model::Model;

const MAGIC: &[u8; 4] = b"SMCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Free-form training metadata stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: Option<usize>,
    pub sgts: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    tokenizer_mode: TokenizerMode,
    tokenizer_max_len: usize,
    vocab: Vec<String>,
    tensors: Vec<TensorHeader>,
    meta: CheckpointMeta,
}

pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model, meta, CHECKPOINT_VERSION);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_bytes(model: &Model, meta: &CheckpointMeta, version: u32) -> Vec<u8> {
    let params = model.encoder.params();
    let header = Header {
        config: model.encoder.config().clone(),
        tokenizer_mode: model.tokenizer.mode(),
        tokenizer_max_len: model.tokenizer.max_len(),
        vocab: model.tokenizer.vocab().tokens().to_vec(),
        tensors: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorHeader {
                name: name.clone(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params.numel() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(digest.as_slice());
    out
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<(Model, CheckpointMeta)> {
    let corrupt = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 + DIGEST_LEN || &bytes[..4] != MAGIC {
        return Err(corrupt("not a checkpoint file or truncated (checksum unavailable)"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch: file is corrupt or truncated"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("header length out of range"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut data = body[header_end..].chunks_exact(8);
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if data.len() != expected || !data.remainder().is_empty() {
        return Err(corrupt("tensor data length does not match header"));
    }
    let mut named = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let values: Vec<f64> = data
            .by_ref()
            .take(t.rows * t.cols)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = Array2::from_shape_vec((t.rows, t.cols), values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        named.push((t.name.clone(), arr));
    }
    let encoder = Encoder::from_tensors(header.config, named)?;
    let vocab = Vocabulary::from_list(&header.vocab).map_err(Error::Checkpoint)?;
    let tokenizer = Tokenizer::new(vocab, header.tokenizer_mode, header.tokenizer_max_len);
    Ok((Model::new(tokenizer, encoder)?, header.meta))
}
