//! Parameter checkpoints.
//!
//! Layout (little-endian): magic `LPBPARM1`, `u8` encoder tag, `u32` dim,
//! `u32` hidden, `u32` max_history, `u32` block count, then `(u32 rows,
//! u32 cols)` per block, then every value as `f32` in block order.

use std::io::{Read, Write};

use super::{EncoderKind, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LPBPARM1";

pub fn write_checkpoint(params: &ModelParams, mut out: impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[params.kind().tag()])?;
    for v in [params.dim(), params.hidden(), params.max_history(), params.blocks().len()] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for block in params.blocks() {
        out.write_all(&(block.rows as u32).to_le_bytes())?;
        out.write_all(&(block.cols as u32).to_le_bytes())?;
    }
    for &v in &params.values {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn bad(message: impl Into<String>) -> Error {
    Error::Parse {
        row: 0,
        message: message.into(),
    }
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint(mut input: impl Read) -> Result<ModelParams> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("missing LPBPARM1 magic"));
    }
    let mut tag = [0u8; 1];
    input.read_exact(&mut tag)?;
    let kind = EncoderKind::from_tag(tag[0]).ok_or_else(|| bad(format!("unknown encoder tag {}", tag[0])))?;
    let dim = read_u32(&mut input)? as usize;
    let hidden = read_u32(&mut input)? as usize;
    let max_history = read_u32(&mut input)? as usize;
    let n_blocks = read_u32(&mut input)? as usize;
    let mut params = ModelParams::zeros(kind, dim, hidden, max_history)?;
    if n_blocks != params.blocks().len() {
        return Err(bad(format!(
            "expected {} blocks for {kind}, found {n_blocks}",
            params.blocks().len()
        )));
    }
    for block in params.blocks().to_vec() {
        let (rows, cols) = (read_u32(&mut input)? as usize, read_u32(&mut input)? as usize);
        if (rows, cols) != (block.rows, block.cols) {
            return Err(bad(format!(
                "block {} has shape {rows}x{cols}, expected {}x{}",
                block.name, block.rows, block.cols
            )));
        }
    }
    let mut raw = vec![0u8; 4 * params.values.len()];
    input.read_exact(&mut raw)?;
    for (v, chunk) in params.values.iter_mut().zip(raw.chunks_exact(4)) {
        let x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !x.is_finite() {
            return Err(Error::NonFinite("checkpoint value"));
        }
        *v = f64::from(x);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    Ok(params)
}
