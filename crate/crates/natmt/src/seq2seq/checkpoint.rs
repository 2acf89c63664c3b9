//! Versioned binary checkpoint container: magic bytes, format version,
//! config (with hash), vocabularies, named parameter blobs, step and
//! validation loss. Parameter values round-trip bit-exactly.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelConfig, ModelError, Seq2SeqModel};
use crate::corpus::Vocabulary;
use crate::graph::ParamStore;
use crate::hash::fnv1a_64;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"NATMTCK\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint stores {file}-byte scalars but this build expects {expected}-byte")]
    ScalarWidthMismatch { file: u8, expected: u8 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A trained-model snapshot.
#[derive(Debug, Clone)]
pub struct Checkpoint<S: Scalar> {
    pub model: Seq2SeqModel<S>,
    pub step: u64,
    pub val_loss: f64,
}

fn config_fields(cfg: &ModelConfig) -> [u64; 8] {
    [
        cfg.enc_layers as u64,
        cfg.dec_layers as u64,
        cfg.width as u64,
        cfg.heads as u64,
        cfg.ffn_width as u64,
        cfg.max_len as u64,
        cfg.src_vocab as u64,
        cfg.tgt_vocab as u64,
    ]
}

/// Stable hash of the architecture config, stored in the checkpoint and
/// verified on load.
pub fn config_hash(cfg: &ModelConfig) -> u64 {
    let mut bytes = Vec::with_capacity(64);
    for f in config_fields(cfg) {
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    fnv1a_64(&bytes)
}

struct Writer<W: Write> {
    inner: W,
    path: String,
}

impl<W: Write> Writer<W> {
    fn err(&self, source: std::io::Error) -> CheckpointError {
        CheckpointError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn bytes(&mut self, b: &[u8]) -> Result<(), CheckpointError> {
        self.inner.write_all(b).map_err(|e| CheckpointError::Io {
            path: self.path.clone(),
            source: e,
        })
    }

    fn u8(&mut self, v: u8) -> Result<(), CheckpointError> {
        self.bytes(&[v])
    }

    fn u32(&mut self, v: u32) -> Result<(), CheckpointError> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> Result<(), CheckpointError> {
        self.bytes(&v.to_le_bytes())
    }

    fn string(&mut self, s: &str) -> Result<(), CheckpointError> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    fn vocab(&mut self, v: &Vocabulary) -> Result<(), CheckpointError> {
        self.u32(v.len() as u32)?;
        for i in 0..v.len() {
            self.string(v.token(i))?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| CheckpointError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        if len > 1 << 24 {
            return Err(CheckpointError::Corrupt("oversized string".into()));
        }
        String::from_utf8(self.bytes(len)?)
            .map_err(|_| CheckpointError::Corrupt("non-UTF-8 string".into()))
    }

    fn vocab(&mut self) -> Result<Vocabulary, CheckpointError> {
        let n = self.u32()? as usize;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            tokens.push(self.string()?);
        }
        Ok(Vocabulary::from_token_list(tokens))
    }
}

impl<S: Scalar> Checkpoint<S> {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let path_str = path.display().to_string();
        let file = std::fs::File::create(path).map_err(|e| CheckpointError::Io {
            path: path_str.clone(),
            source: e,
        })?;
        let mut w = Writer {
            inner: BufWriter::new(file),
            path: path_str,
        };
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u8(S::BYTE_WIDTH)?;
        w.u64(self.step)?;
        w.u64(self.val_loss.to_bits())?;
        let cfg = self.model.config();
        for f in config_fields(cfg) {
            w.u64(f)?;
        }
        w.u64(config_hash(cfg))?;
        w.vocab(self.model.src_vocab())?;
        w.vocab(self.model.tgt_vocab())?;
        let params = self.model.params();
        w.u32(params.len() as u32)?;
        for (_, name, tensor) in params.iter() {
            w.string(name)?;
            w.u64(tensor.rows() as u64)?;
            w.u64(tensor.cols() as u64)?;
            for &v in tensor.data() {
                let bits = v.to_bits_u64();
                w.bytes(&bits.to_le_bytes()[..S::BYTE_WIDTH as usize])?;
            }
        }
        w.inner.flush().map_err(|e| w.err(e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint<S>, CheckpointError> {
        let path_str = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| CheckpointError::Io {
            path: path_str.clone(),
            source: e,
        })?;
        let mut r = Reader {
            inner: BufReader::new(file),
            path: path_str,
        };
        if r.bytes(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let width = r.u8()?;
        if width != S::BYTE_WIDTH {
            return Err(CheckpointError::ScalarWidthMismatch {
                file: width,
                expected: S::BYTE_WIDTH,
            });
        }
        let step = r.u64()?;
        let val_loss = f64::from_bits(r.u64()?);
        let fields: Vec<u64> = (0..8).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let cfg = ModelConfig {
            enc_layers: fields[0] as usize,
            dec_layers: fields[1] as usize,
            width: fields[2] as usize,
            heads: fields[3] as usize,
            ffn_width: fields[4] as usize,
            max_len: fields[5] as usize,
            src_vocab: fields[6] as usize,
            tgt_vocab: fields[7] as usize,
        };
        let stored_hash = r.u64()?;
        if stored_hash != config_hash(&cfg) {
            return Err(CheckpointError::Corrupt("config hash mismatch".into()));
        }
        let src_vocab = r.vocab()?;
        let tgt_vocab = r.vocab()?;
        let n_params = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            if rows.checked_mul(cols).map_or(true, |n| n > 1 << 28) {
                return Err(CheckpointError::Corrupt(format!(
                    "parameter {name} has implausible shape {rows}x{cols}"
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            let w = S::BYTE_WIDTH as usize;
            let raw = r.bytes(rows * cols * w)?;
            for chunk in raw.chunks_exact(w) {
                let mut bits = [0u8; 8];
                bits[..w].copy_from_slice(chunk);
                data.push(S::from_bits_u64(u64::from_le_bytes(bits)));
            }
            params.add(name, Matrix::from_vec(rows, cols, data));
        }
        let model = Seq2SeqModel::from_parts(cfg, params, src_vocab, tgt_vocab, step)?;
        Ok(Checkpoint {
            model,
            step,
            val_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, BOS_ID};
    use crate::seq2seq::ModelConfig;

    fn small_model(seed: u64) -> Seq2SeqModel<f32> {
        let corpus = vec![tokenize("p q r s", true)];
        let vocab = Vocabulary::build(&corpus, 1);
        let cfg = ModelConfig {
            enc_layers: 1,
            dec_layers: 1,
            width: 8,
            heads: 2,
            ffn_width: 16,
            max_len: 10,
            ..ModelConfig::default()
        };
        Seq2SeqModel::new(cfg, vocab.clone(), vocab, seed).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical_on_fixed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = small_model(21);
        let ckpt = Checkpoint {
            model,
            step: 123,
            val_loss: 0.456,
        };
        ckpt.save(&path).unwrap();
        let loaded: Checkpoint<f32> = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 123);
        assert_eq!(loaded.val_loss, 0.456);

        let x = tokenize("p q", true);
        let src = ckpt.model.encode_source(&x, None).unwrap();
        let a = ckpt.model.forward_log_probs(&src, &[BOS_ID, 6]).unwrap();
        let b = loaded.model.forward_log_probs(&src, &[BOS_ID, 6]).unwrap();
        let bits = |m: &Matrix<f32>| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn scalar_width_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = Checkpoint {
            model: small_model(3),
            step: 1,
            val_loss: 1.0,
        };
        ckpt.save(&path).unwrap();
        let res: Result<Checkpoint<f64>, _> = Checkpoint::load(&path);
        assert!(matches!(
            res,
            Err(CheckpointError::ScalarWidthMismatch { file: 4, expected: 8 })
        ));
    }

    #[test]
    fn garbage_is_rejected_by_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        let res: Result<Checkpoint<f32>, _> = Checkpoint::load(&path);
        assert!(matches!(res, Err(CheckpointError::BadMagic)));
    }
}
