//! Byte-level step contract for driving the denoiser from another process:
//! `(latent blob, prompt, t, amplification) -> (latent blob, FQAT record)`.
//!
//! Latent blob (little-endian): magic `b"FQLT"`, version u32, height u32,
//! width u32, channels u32, step u32, seed u64, stream u64, then
//! `channels * height * width` f64 values, channel-planar.

use std::path::Path;

use fairqueue_core::denoiser::{Denoiser, LatentState};
use fairqueue_core::prompt::ComposedPrompt;
use fairqueue_core::schedule::AmplificationSpec;

use crate::dump;
use crate::error::{HarnessError, Result};

pub const LATENT_MAGIC: &[u8; 4] = b"FQLT";
pub const LATENT_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

pub fn encode_latent(state: &LatentState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * state.data().len());
    out.extend_from_slice(LATENT_MAGIC);
    for v in [LATENT_VERSION, state.height() as u32, state.width() as u32, state.channels() as u32, state.step() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.seed().to_le_bytes());
    out.extend_from_slice(&state.stream().to_le_bytes());
    for v in state.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_latent(bytes: &[u8]) -> Result<LatentState> {
    let src = Path::new("<latent blob>");
    if bytes.len() < HEADER_LEN || &bytes[..4] != LATENT_MAGIC {
        return Err(HarnessError::format(src, "not an FQLT latent blob"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    if u32_at(4) != LATENT_VERSION as usize {
        return Err(HarnessError::format(src, format!("unsupported FQLT version {}", u32_at(4))));
    }
    let (h, w, c, step) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 8 * h * w * c {
        return Err(HarnessError::format(src, "payload length mismatch"));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    Ok(LatentState::new(h, w, c, data, step, u64_at(24), u64_at(32))?)
}

/// Runs step `t`. The record comes back as a one-record FQAT dump whose
/// step index is 0; the true step travels in the latent blob.
pub fn step_blob<D: Denoiser + ?Sized>(
    denoiser: &D,
    latent: &[u8],
    prompt: &ComposedPrompt,
    t: usize,
    amplification: Option<&AmplificationSpec>,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let state = decode_latent(latent)?;
    let (next, mut record) = denoiser.step(&state, prompt, t, amplification)?;
    record.step = 0;
    Ok((encode_latent(&next), dump::encode(&[record])?))
}
