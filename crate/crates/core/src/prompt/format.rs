//! FQEM embedding files.
//!
//! Layout (little-endian):
//! - magic: `b"FQEM"`
//! - version: u32 (currently 1)
//! - rows: u32
//! - dim: u32
//! - data: `rows * dim` f32, row-major
//!
//! Row labels and category assignments live in an adjacent JSON manifest at
//! `<file>.json`, e.g. `refs.fqem` -> `refs.fqem.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EmbeddingMatrix;

pub const MAGIC: &[u8; 4] = b"FQEM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<usize>>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses an FQEM payload; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated FQEM header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic bytes, expected FQEM"));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported FQEM version {version}")));
    }
    let rows = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    let expected = rows * dim * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header implies {expected}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    EmbeddingMatrix::new(rows, dim, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `m` and its manifest. Labels come from the matrix itself.
pub fn write(path: &Path, m: &EmbeddingMatrix, categories: Option<&[usize]>) -> Result<()> {
    if let Some(c) = categories {
        if c.len() != m.rows() {
            return Err(Error::InvalidInput(format!(
                "{} categories for {} rows",
                c.len(),
                m.rows()
            )));
        }
    }
    fs::write(path, encode(m)).map_err(|e| Error::io(path, e))?;
    let manifest = EmbeddingManifest {
        labels: m.labels().map(<[String]>::to_vec),
        categories: categories.map(<[usize]>::to_vec),
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))
}

/// Reads an FQEM file and, when present, its manifest.
pub fn read(path: &Path) -> Result<(EmbeddingMatrix, EmbeddingManifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut m = decode(&bytes, path)?;
    let mpath = manifest_path(path);
    let manifest = match fs::read_to_string(&mpath) {
        Ok(text) => serde_json::from_str::<EmbeddingManifest>(&text).map_err(|e| Error::format(&mpath, e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => EmbeddingManifest::default(),
        Err(e) => return Err(Error::io(&mpath, e)),
    };
    if let Some(c) = &manifest.categories {
        if c.len() != m.rows() {
            return Err(Error::format(&mpath, format!("{} categories for {} rows", c.len(), m.rows())));
        }
    }
    if let Some(labels) = &manifest.labels {
        m = m
            .with_labels(labels.clone())
            .map_err(|e| Error::format(&mpath, e.to_string()))?;
    }
    Ok((m, manifest))
}
