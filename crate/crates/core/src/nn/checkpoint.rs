//! Model checkpoint files.
//!
//! Byte layout (all integers little-endian):
//!
//! | offset      | size  | content                                   |
//! |-------------|-------|-------------------------------------------|
//! | 0           | 8     | magic `CLADCKPT`                          |
//! | 8           | 4     | format version, `u32` (= 1)               |
//! | 12          | 4     | header length `H`, `u32`                  |
//! | 16          | H     | shape-spec as UTF-8 JSON                  |
//! | 16+H        | 8     | parameter count `P`, `u64`                |
//! | 24+H        | 8·P   | flattened parameters, `f64` each          |

use std::io::{Read, Write};

use super::ShapeSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CLADCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, spec: &ShapeSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::shape("write_checkpoint", spec.param_count(), params.len()));
    }
    let header = serde_json::to_vec(spec)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ShapeSpec, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let spec: ShapeSpec = serde_json::from_slice(&header)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    if count != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "header describes {} parameters, body declares {count}",
            spec.param_count()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u64buf)?;
        params.push(f64::from_le_bytes(u64buf));
    }
    Ok((spec, params))
}
