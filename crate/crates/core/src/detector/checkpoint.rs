//! Binary model checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "SLTM"
//! version    u8       1
//! layers     u32      layer count L
//! shapes     L x (u32 in_dim, u32 out_dim)
//! weights    per layer: in_dim*out_dim f64 (row-major, out x in), then out_dim f64 bias
//! ```

use super::model::{Dense, ToyModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLTM";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Upper bound on a single layer dimension accepted by the decoder.
const MAX_DIM: u32 = 1 << 16;

pub fn encode_checkpoint(model: &ToyModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 8 * model.layers.len() + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for l in &model.layers {
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
    }
    for w in model.params() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8, "weight")?.try_into().expect("8 bytes"),
        ))
    }
}

/// Decodes and checks a checkpoint (layer chain, output width, finite
/// weights, no trailing bytes).
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ToyModel> {
    let mut r = Reader {
        data: bytes,
        pos: 0,
    };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.take(1, "version")?[0];
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("layer count")?;
    if count != 3 {
        return Err(Error::Checkpoint(format!("expected 3 layers, got {count}")));
    }
    let mut shapes = Vec::with_capacity(3);
    for _ in 0..count {
        let (i, o) = (r.u32("in_dim")?, r.u32("out_dim")?);
        if i == 0 || o == 0 || i > MAX_DIM || o > MAX_DIM {
            return Err(Error::Checkpoint(format!(
                "layer shape {i}x{o} out of range"
            )));
        }
        shapes.push((i as usize, o as usize));
    }
    let needed: usize = shapes.iter().map(|(i, o)| (i * o + o) * 8).sum();
    if bytes.len() - r.pos != needed {
        return Err(Error::Checkpoint(format!(
            "expected {needed} weight bytes, found {}",
            bytes.len() - r.pos
        )));
    }
    let mut layers = Vec::with_capacity(3);
    for (i, o) in shapes {
        let mut l = Dense::zeros(i, o);
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = r.f64()?;
        }
        layers.push(l);
    }
    let model = ToyModel { layers };
    model
        .check()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(model)
}
