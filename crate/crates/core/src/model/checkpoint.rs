//! Checkpoint layout (little endian):
//!
//! ```text
//! b"SMIXCKPT" | u32 version | u64 header length | JSON header | f64 values
//! ```
//!
//! The header carries the model config, the vocabulary and tensor shapes;
//! values follow in tensor order. Floats are stored as raw bits, so a load
//! returns exactly what was saved.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::lang::{VocabEntry, Vocabulary};

const MAGIC: &[u8; 8] = b"SMIXCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<VocabEntry>,
    min_count: u64,
    shapes: Vec<(String, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config,
            vocab: self.vocab.entries(),
            min_count: self.vocab.min_count(),
            shapes: TENSOR_NAMES
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| (n.to_string(), t.rows, t.cols))
                .collect(),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body_start = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..body_start]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        header.config.validate()?;
        if header.vocab.len() < Vocabulary::N_SPECIAL {
            return Err(bad("vocabulary lacks special entries"));
        }
        let learnable = header.vocab[Vocabulary::N_SPECIAL..].iter().map(|e| (e.word.clone(), e.count)).collect();
        let vocab = Vocabulary::from_counts(learnable, header.min_count)?;
        let mut params = ModelParams::zeros(vocab.len(), header.config.embed_dim, header.config.hidden_dim);
        let expected: Vec<(String, usize, usize)> = TENSOR_NAMES
            .iter()
            .zip(params.tensors())
            .map(|(n, t)| (n.to_string(), t.rows, t.cols))
            .collect();
        if expected != header.shapes {
            return Err(bad("tensor shapes do not match config and vocabulary"));
        }
        let body = &bytes[body_start..];
        if body.len() != 8 * params.num_params() {
            return Err(bad("parameter block has the wrong length"));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for t in params.tensors_mut() {
            for x in t.data.iter_mut() {
                *x = values.next().expect("length checked");
            }
        }
        Ok(Checkpoint { config: header.config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::init_params;

    fn checkpoint() -> Checkpoint {
        let vocab = Vocabulary::from_counts(vec![("is".into(), 9), ("red".into(), 4)], 3).unwrap();
        let config = ModelConfig { embed_dim: 3, hidden_dim: 5, ..Default::default() };
        let mut params = init_params(&config, &vocab, 7).unwrap();
        params.w_rec.data[0] = f64::MIN_POSITIVE / 3.0;
        params.b_out.data[1] = -0.0;
        Checkpoint { config, vocab, params }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = checkpoint();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let bits = |p: &ModelParams| p.values().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&ck.params));
        assert_eq!(back.vocab, ck.vocab);
        assert_eq!(back.config, ck.config);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = checkpoint().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        assert!(Checkpoint::from_bytes(b"short").is_err());
    }
}
