//! Binary checkpoint container.
//!
//! ```text
//! #kifa-ckpt v1\n
//! u32 config_len, config JSON (NetConfig echo)
//! u64 training seed
//! u32 joint_count
//! u32 array_count
//! per array: u32 name_len, name, u32 ndim, u64 dims[ndim], f64 values[prod(dims)]
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{NetConfig, NetParams, TENSOR_NAMES};
use crate::error::{KifaError, Result};
use crate::math::Mat;

pub const CKPT_TAG: &str = "#kifa-ckpt v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub seed: u64,
    pub params: NetParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_TAG.as_bytes());
        out.push(b'\n');
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.joint_count as u32).to_le_bytes());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in TENSOR_NAMES.iter().zip(tensors) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.rows as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols as u64).to_le_bytes());
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let tag = r.take(CKPT_TAG.len() + 1)?;
        if &tag[..CKPT_TAG.len()] != CKPT_TAG.as_bytes() || tag[CKPT_TAG.len()] != b'\n' {
            return Err(KifaError::Format("missing checkpoint tag".into()));
        }
        let config_len = r.u32()? as usize;
        let config: NetConfig = serde_json::from_slice(r.take(config_len)?)?;
        let seed = r.u64()?;
        let joint_count = r.u32()? as usize;
        let count = r.u32()? as usize;
        if count != TENSOR_NAMES.len() {
            return Err(KifaError::Format(format!(
                "expected {} arrays, found {count}",
                TENSOR_NAMES.len()
            )));
        }
        let mut arrays = Vec::with_capacity(count);
        for expected in TENSOR_NAMES {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| KifaError::Format("array name is not UTF-8".into()))?;
            if name != expected {
                return Err(KifaError::Format(format!("expected array `{expected}`, found `{name}`")));
            }
            if r.u32()? != 2 {
                return Err(KifaError::Format(format!("array `{name}` is not 2-D")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| KifaError::Format(format!("array `{name}` is truncated")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            arrays.push(Mat { rows, cols, data });
        }
        if r.remaining() != 0 {
            return Err(KifaError::Format("trailing bytes after checkpoint".into()));
        }
        let mut it = arrays.into_iter();
        let mut next = || it.next().expect("array count checked");
        let params = NetParams {
            joint_count,
            input_proj: next(),
            joint_embed: next(),
            joint_att_embed: next(),
            joint_att_hidden: next(),
            joint_att_bias: next(),
            joint_att_score: next(),
            cell_input: next(),
            cell_recurrent: next(),
            cell_bias: next(),
            temporal_att_hidden: next(),
            temporal_att_bias: next(),
            temporal_att_score: next(),
            classifier: next(),
            classifier_bias: next(),
        };
        params.validate()?;
        Ok(Checkpoint { config, seed, params })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(KifaError::Format("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| KifaError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| KifaError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
