//! Binary checkpoint format.
//!
//! ```text
//! "CNVD"                      magic
//! u32                         format version
//! u32 + bytes                 JSON header: config, vocabulary, LoRA adapters,
//!                             stage provenance, seed, trainable names
//! u32                         tensor count
//! per tensor (name order):
//!   u32 + bytes               UTF-8 name
//!   u32                       rank
//!   u64 × rank                dims
//!   f64 × product(dims)       row-major values
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stage::StageConfig;
use crate::error::{Error, Result};
use crate::model::{LoraAdapter, ModelConfig, MultimodalModel, Vocabulary};
use crate::numerics::{ParameterStore, Tensor};

pub const MAGIC: &[u8; 4] = b"CNVD";
pub const FORMAT_VERSION: u32 = 1;

/// A model plus the record of how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MultimodalModel,
    pub provenance: Vec<StageConfig>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vec<char>,
    lora: Vec<LoraAdapter>,
    provenance: Vec<StageConfig>,
    seed: u64,
    trainable: Vec<String>,
}

impl Checkpoint {
    pub fn new(model: MultimodalModel, seed: u64) -> Self {
        Self {
            model,
            provenance: Vec::new(),
            seed,
        }
    }

    pub fn stages(&self) -> Vec<u8> {
        self.provenance.iter().map(|s| s.stage).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.model.config.clone(),
            vocabulary: self.model.vocab.alphabet().to_vec(),
            lora: self.model.lora_adapters().cloned().collect(),
            provenance: self.provenance.clone(),
            seed: self.seed,
            trainable: self.model.params.trainable().iter().cloned().collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.model.params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_len(&mut out, header.len())?;
        out.extend_from_slice(&header);
        put_len(&mut out, self.model.params.len())?;
        for (name, t) in self.model.params.iter() {
            put_len(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_len(&mut out, t.shape().len())?;
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

        let count = r.u32()? as usize;
        let mut params = ParameterStore::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!("tensor `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel: usize = 1;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?)
                    .map_err(|_| Error::Checkpoint(format!("tensor `{name}` dimension overflows")))?;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` size overflows")))?;
                shape.push(d);
            }
            let nbytes = numel
                .checked_mul(8)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` size overflows")))?;
            let raw = r.take(nbytes)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            params
                .insert(name, Tensor::new(shape, data)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        params
            .set_trainable(header.trainable)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let vocab = Vocabulary::from_chars(header.vocabulary);
        let model = MultimodalModel::from_parts(header.config, vocab, params, header.lora)?;
        Ok(Self {
            model,
            provenance: header.provenance,
            seed: header.seed,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
