//! Binary checkpoint container.
//!
//! ```text
//! u8        version (= 1)
//! [u8; 4]   magic "LSHN"
//! u32 × 4   d_img, hidden_enc, n_neurons, hidden_dec   (little endian)
//! u8        flags (bit 0: zero diagonal)
//! [u8; 32]  config hash
//! u32       tensor count
//! per tensor, in declared order w1 b1 w2 b2 w3 b3 w4 b4 a w_in b_in:
//!   u8 name length, name bytes (UTF-8)
//!   u32 rank, u64 × rank dims
//!   f64 × Π dims values (little endian)
//! u32       CRC-32 of every preceding byte
//! ```

use std::path::Path;

use super::{Lshn, ModelDims, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::ndgrad::{Param, Tensor};

pub const CHECKPOINT_VERSION: u8 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSHN";

pub fn encode_checkpoint(model: &Lshn, config_hash: &[u8; 32]) -> Vec<u8> {
    let mut out = vec![CHECKPOINT_VERSION];
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let d = model.dims;
    for v in [d.d_img, d.hidden_enc, d.n_neurons, d.hidden_dec] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(u8::from(model.zero_diagonal));
    out.extend_from_slice(config_hash);
    let params = model.params.iter();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in PARAM_NAMES.iter().zip(params) {
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &s in shape {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Lshn, [u8; 32])> {
    if bytes.len() < 5 + 16 + 1 + 32 + 4 + 4 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut c = Cursor { bytes: body, at: 0 };
    let version = c.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let dims = ModelDims {
        d_img: c.u32()? as usize,
        hidden_enc: c.u32()? as usize,
        n_neurons: c.u32()? as usize,
        hidden_dec: c.u32()? as usize,
    };
    let flags = c.u8()?;
    let hash: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
    let count = c.u32()? as usize;
    if count != PARAM_NAMES.len() {
        return Err(Error::Checkpoint(format!("expected 11 tensors, found {count}")));
    }
    let mut model = Lshn::zeros(dims)?;
    model.zero_diagonal = flags & 1 == 1;
    for (name, slot) in PARAM_NAMES.iter().zip(model.params.iter_mut()) {
        let len = c.u8()? as usize;
        let found = c.take(len)?;
        if found != name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{name}`, found `{}`",
                String::from_utf8_lossy(found)
            )));
        }
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != slot.value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {shape:?}, dims imply {:?}",
                slot.value.shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = c.take(8 * n)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        *slot = Param::new(Tensor::new(shape, data)?);
    }
    if c.at != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            body.len() - c.at
        )));
    }
    Ok((model, hash))
}

pub fn save_checkpoint(path: &Path, model: &Lshn, config_hash: &[u8; 32]) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, config_hash)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Lshn, [u8; 32])> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
