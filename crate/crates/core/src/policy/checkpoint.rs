//! Binary checkpoint format.
//!
//! Layout (little-endian): magic, version `u32`, role `u8`, vocabulary
//! sha256, `K d H V` as `u32`, the five parameter arrays as `f64`, the
//! optimizer step `u64`, `lr beta1 beta2 eps` as `f64`, the first- then
//! second-moment arrays, and finally the run configuration text as a `u32`
//! length followed by UTF-8 bytes.

use std::fs;
use std::path::Path;

use super::{Blocks, Dims, OptimizerState, PolicyParameters, Role};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DVLRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, PartialEq, Debug)]
pub struct Checkpoint {
    pub params: PolicyParameters<f64>,
    pub optimizer: OptimizerState<f64>,
    /// Configuration the checkpoint was produced under, for provenance.
    pub config: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let dims = p.dims();
        let mut out = Vec::with_capacity(8 * (3 * p.num_params() + 8) + self.config.len() + 64);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(p.role().tag());
        out.extend_from_slice(&p.vocab_hash());
        for n in [dims.context, dims.embed, dims.hidden, dims.vocab] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        let put = |out: &mut Vec<u8>, b: &Blocks<f64>| {
            for x in b.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(&mut out, &p.blocks);
        let o = &self.optimizer;
        out.extend_from_slice(&o.step.to_le_bytes());
        for x in [o.lr, o.beta1, o.beta2, o.eps] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        put(&mut out, &o.m);
        put(&mut out, &o.v);
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], vocab: &Vocabulary) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let tag = r.take(1)?[0];
        let role = Role::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown role tag {tag}")))?;
        if r.take(32)? != vocab.content_hash() {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        let dims = Dims {
            context: r.u32()? as usize,
            embed: r.u32()? as usize,
            hidden: r.u32()? as usize,
            vocab: r.u32()? as usize,
        };
        let mut blocks = Blocks::zeros(dims);
        r.fill(&mut blocks)?;
        let params = PolicyParameters::from_parts(role, dims, vocab, blocks)?;
        let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let mut m = Blocks::zeros(dims);
        let mut v = Blocks::zeros(dims);
        r.fill(&mut m)?;
        r.fill(&mut v)?;
        let len = r.u32()? as usize;
        let config = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("configuration text is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        if !params.blocks.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        let optimizer = OptimizerState {
            m,
            v,
            step,
            lr,
            beta1,
            beta2,
            eps,
        };
        Ok(Checkpoint {
            params,
            optimizer,
            config,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, b: &mut Blocks<f64>) -> Result<()> {
        for block in b.blocks_mut() {
            for x in block.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, vocab)
}
