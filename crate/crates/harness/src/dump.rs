//! FQAT attention dumps.
//!
//! Layout (little-endian):
//! - magic `b"FQAT"`, version u32 (currently 1)
//! - steps u32, layers u32, tokens u32
//! - per layer: height u32, width u32
//! - payload: f32 ordered `[step][layer][token][row][col]`
//!
//! Only raw (pre-amplification) maps are stored. Record `i` of a dump is
//! step `i`.

use std::fs;
use std::path::Path;

use fairqueue_core::denoiser::{AttentionRecord, LayerMaps};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"FQAT";
pub const VERSION: u32 = 1;

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(records: &[AttentionRecord]) -> Result<Vec<u8>> {
    let (tokens, shapes): (usize, Vec<(usize, usize)>) = match records.first() {
        None => (0, Vec::new()),
        Some(r) => (r.token_count, r.layers.iter().map(|l| (l.height, l.width)).collect()),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put(&mut out, records.len());
    put(&mut out, shapes.len());
    put(&mut out, tokens);
    for &(h, w) in &shapes {
        put(&mut out, h);
        put(&mut out, w);
    }
    for (i, rec) in records.iter().enumerate() {
        let same_shape = rec.token_count == tokens
            && rec.layers.len() == shapes.len()
            && rec.layers.iter().zip(&shapes).all(|(l, s)| (l.height, l.width) == *s);
        if rec.step != i || !same_shape {
            return Err(HarnessError::Config(format!(
                "record {i} (step {}) does not continue a uniform step sequence",
                rec.step
            )));
        }
        for layer in &rec.layers {
            if layer.raw.len() != tokens * layer.height * layer.width {
                return Err(HarnessError::Config(format!("record {i}: layer {} has a short map buffer", layer.layer_id)));
            }
            for v in &layer.raw {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<usize> {
        let b = self
            .bytes
            .get(self.at..self.at + 4)
            .ok_or_else(|| HarnessError::format(self.path, "truncated FQAT header"))?;
        self.at += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Parses an FQAT payload; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<AttentionRecord>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(HarnessError::format(path, "bad magic bytes, expected FQAT"));
    }
    let mut cur = Cursor { bytes, at: 4, path };
    let version = cur.u32()? as u32;
    if version != VERSION {
        return Err(HarnessError::format(path, format!("unsupported FQAT version {version}")));
    }
    let steps = cur.u32()?;
    let layers = cur.u32()?;
    let tokens = cur.u32()?;
    let shapes = (0..layers).map(|_| Ok((cur.u32()?, cur.u32()?))).collect::<Result<Vec<_>>>()?;
    let per_step: usize = shapes.iter().map(|(h, w)| tokens * h * w).sum();
    let expected = steps * per_step * 4;
    let payload = &bytes[cur.at..];
    if payload.len() != expected {
        return Err(HarnessError::format(
            path,
            format!("payload length mismatch: {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    Ok((0..steps)
        .map(|step| AttentionRecord {
            step,
            token_count: tokens,
            layers: shapes
                .iter()
                .enumerate()
                .map(|(layer_id, &(height, width))| LayerMaps {
                    layer_id,
                    height,
                    width,
                    raw: values.by_ref().take(tokens * height * width).collect(),
                    amplified: None,
                })
                .collect(),
        })
        .collect())
}

pub fn write(path: &Path, records: &[AttentionRecord]) -> Result<()> {
    fs::write(path, encode(records)?).map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<AttentionRecord>> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes, path)
}
