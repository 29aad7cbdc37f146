//! Single-file weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CWENC001"
//! config_len   u32      followed by the encoder config as TOML text
//! tensor_count u32
//! per tensor:  u32 name length, name (UTF-8), u32 rank, rank × u64 dims,
//!              product(dims) × f64
//! ```
//!
//! Tensors are written in [`EncoderWeights::named`] order; loading checks
//! every name and shape against the stored config.

use std::io::{Read, Write};
use std::path::Path;

use super::{EncoderConfig, EncoderWeights, ModelError, Result};

const MAGIC: &[u8; 8] = b"CWENC001";

pub fn write_checkpoint(
    config: &EncoderConfig,
    weights: &EncoderWeights,
    mut out: impl Write,
) -> Result<()> {
    weights.check_shapes(config)?;
    let cfg = toml::to_string(config).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(cfg.len() as u32).to_le_bytes())?;
    out.write_all(cfg.as_bytes())?;
    let tensors = weights.named();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &dim in &t.shape {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.data.len() * 8);
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_checkpoint(
    config: &EncoderConfig,
    weights: &EncoderWeights,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(config, weights, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| ModelError::Checkpoint("invalid UTF-8".into()))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<(EncoderConfig, EncoderWeights)> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let cfg_len = read_u32(&mut r)? as usize;
    let cfg_text = read_string(&mut r, cfg_len)?;
    let config: EncoderConfig = toml::from_str(&cfg_text).map_err(|e| bad(format!("config: {e}")))?;
    config.validate()?;

    let mut weights = EncoderWeights::zeros(&config);
    let count = read_u32(&mut r)? as usize;
    let mut expected = weights.named_mut();
    if count != expected.len() {
        return Err(bad(format!("expected {} tensors, found {count}", expected.len())));
    }
    for (want_name, tensor) in expected.iter_mut() {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        if &name != want_name {
            return Err(bad(format!("expected tensor {want_name}, found {name}")));
        }
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        if shape != tensor.shape {
            return Err(bad(format!(
                "tensor {name}: shape {shape:?} does not match config shape {:?}",
                tensor.shape
            )));
        }
        let mut buf = vec![0u8; tensor.data.len() * 8];
        r.read_exact(&mut buf)?;
        for (x, chunk) in tensor.data.iter_mut().zip(buf.chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    drop(expected);
    if !weights.all_finite() {
        return Err(bad("non-finite parameter values".into()));
    }
    Ok((config, weights))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EncoderConfig, EncoderWeights)> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&bytes[..])
}
