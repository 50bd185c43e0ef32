//! Binary checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "TZNACKPT"
//! version    u32
//! dims       u32 × 3  (|V|, d, H)
//! vocab hash 32 bytes
//! tensors    f32 row-major, in TENSOR_NAMES order
//! optimizer  u8 flag; when 1: t u64, beta1/beta2/eps f64,
//!            clip flag u8 + f64, then m and v tensors as f32
//! ```

use std::path::Path;

use super::adam::{Adam, AdamConfig};
use super::params::{Dims, ModelParams};
use crate::error::{Error, Result};
use crate::vocab::{VocabHash, Vocabulary};

pub const MAGIC: &[u8; 8] = b"TZNACKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab_hash: VocabHash,
    pub optimizer: Option<Adam<f32>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, vocab_hash: VocabHash) -> Self {
        Checkpoint {
            params,
            vocab_hash,
            optimizer: None,
        }
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.params.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in self.dims().as_tuple_array() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.vocab_hash.0);
        write_tensors(&mut out, &self.params);
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.t.to_le_bytes());
                for x in [opt.config.beta1, opt.config.beta2, opt.config.eps] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.push(opt.config.clip_norm.is_some() as u8);
                out.extend_from_slice(&opt.config.clip_norm.unwrap_or(0.0).to_le_bytes());
                write_tensors(&mut out, &opt.m);
                write_tensors(&mut out, &opt.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported version {version}"
            )));
        }
        let dims = Dims::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if dims.vocab == 0 || dims.embed == 0 || dims.hidden == 0 {
            return Err(Error::CheckpointFormat(format!(
                "zero dimension in {dims:?}"
            )));
        }
        let vocab_hash = VocabHash(r.take(32)?.try_into().expect("32 bytes"));
        let params = r.tensors(dims)?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                let has_clip = r.u8()? != 0;
                let clip = r.f64()?;
                let config = AdamConfig {
                    beta1,
                    beta2,
                    eps,
                    clip_norm: has_clip.then_some(clip),
                };
                let m = r.tensors(dims)?;
                let v = r.tensors(dims)?;
                Some(Adam { config, m, v, t })
            }
            flag => {
                return Err(Error::CheckpointFormat(format!(
                    "bad optimizer flag {flag}"
                )))
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params,
            vocab_hash,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint and checks it was trained against `vocab`.
    pub fn load_for(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let ckpt = Self::load(path)?;
        ckpt.check_vocab(vocab)?;
        Ok(ckpt)
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.hash() {
            return Err(Error::VocabMismatch {
                expected: vocab.hash().to_hex(),
                found: self.vocab_hash.to_hex(),
            });
        }
        if self.dims().vocab != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: (vocab.len(), self.dims().embed, self.dims().hidden),
                found: self.dims().as_tuple(),
            });
        }
        Ok(())
    }

    pub fn check_dims(&self, expected: Dims) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected: expected.as_tuple(),
                found: self.dims().as_tuple(),
            });
        }
        Ok(())
    }
}

impl Dims {
    fn as_tuple_array(&self) -> [usize; 3] {
        [self.vocab, self.embed, self.hidden]
    }
}

fn write_tensors(out: &mut Vec<u8>, p: &ModelParams<f32>) {
    for t in p.tensors() {
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
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
            .ok_or_else(|| Error::CheckpointFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn tensors(&mut self, dims: Dims) -> Result<ModelParams<f32>> {
        let mut p = ModelParams::zeros(dims);
        for t in p.tensors_mut() {
            let raw = self.take(4 * t.len())?;
            for (x, b) in t.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
        }
        Ok(p)
    }
}
