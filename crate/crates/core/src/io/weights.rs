//! Flat binary weights container, little-endian throughout:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `HMKMMCA\0`                         |
//! | 4     | format version (u32, currently 1)         |
//! | 4     | channel count `d` (u32)                   |
//! | 4     | unit count (u32; 1 for MMCA, 3 for TUMM)  |
//! | ...   | each unit's tensors as f64                |
//!
//! Per unit the tensors follow [`MmcaWeights::tensors`]: the query-branch
//! encoder, the context-branch encoder, then the two cross-attention layers
//! (`Wq, Wk, Wv, Wo` each). An encoder stores norm-1 gain and bias, `Wq, Wk,
//! Wv, Wo`, norm-2 gain and bias, then `W1 (d x 4d), b1, W2 (4d x d), b2`.
//! Matrices are row-major and act on row vectors.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{init_weights, MmcaWeights, TummWeights};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"HMKMMCA\0";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_units(units: &[&MmcaWeights]) -> Result<Vec<u8>> {
    let d = units.first().map_or(0, |u| u.dim());
    if units.iter().any(|u| u.dim() != d) {
        return Err(Error::validation("weight units disagree on d"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    for n in [d, units.len()] {
        let n = u32::try_from(n)
            .map_err(|_| Error::validation("weights too large for the container"))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for u in units {
        for t in u.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_units(bytes: &[u8]) -> Result<Vec<MmcaWeights>> {
    let bad = |m: &str| Error::parse("weights", m);
    if bytes.len() < 20 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
    if word(8) != WEIGHTS_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (d, count) = (word(12), word(16));
    if d == 0 {
        return Err(bad("d must be at least 1"));
    }
    let template = init_weights(d, 0)?;
    let per_unit = template.parameter_count();
    let expected = per_unit
        .checked_mul(count)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(20))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes for d = {d} and {count} units, found {}",
            bytes.len()
        )));
    }
    let mut values = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut units = Vec::with_capacity(count);
    for _ in 0..count {
        let mut w = template.clone();
        for t in w.tensors_mut() {
            for (slot, v) in t.iter_mut().zip(values.by_ref()) {
                *slot = v;
            }
        }
        w.validate()?;
        units.push(w);
    }
    Ok(units)
}

pub fn write_tumm_weights(path: &Path, w: &TummWeights) -> Result<()> {
    super::write_bytes(path, &encode_units(&w.units())?)
}

pub fn read_tumm_weights(path: &Path) -> Result<TummWeights> {
    let mut units = decode_units(&std::fs::read(path)?)?;
    if units.len() != 3 {
        return Err(Error::parse(
            "weights",
            format!("TUMM needs 3 units, file has {}", units.len()),
        ));
    }
    let fuse = units.pop().expect("3 units");
    let lidar_event = units.pop().expect("3 units");
    let lidar_rgb = units.pop().expect("3 units");
    Ok(TummWeights {
        lidar_rgb,
        lidar_event,
        fuse,
    })
}
