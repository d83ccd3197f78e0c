use std::path::Path;

use fairqueue_core::forensics::{accumulate, MapSource};
use serde::Serialize;

use super::{ensure_dir, write_text};
use crate::dump;
use crate::error::Result;

pub const ACCUMULATED_FILE: &str = "accumulated.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpSummary {
    pub steps: usize,
    pub layers: usize,
    pub tokens: usize,
    /// `(h, w)` per layer.
    pub shapes: Vec<(usize, usize)>,
    /// Largest `|sum over tokens - 1|` over every pixel of every map.
    pub max_normalization_error: f64,
}

pub fn summarize(records: &[fairqueue_core::denoiser::AttentionRecord]) -> DumpSummary {
    let first = records.first();
    let mut worst: f64 = 0.0;
    for rec in records {
        for layer in &rec.layers {
            let n = layer.cells();
            for p in 0..n {
                let s: f64 = (0..rec.token_count).map(|t| layer.raw[t * n + p]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    DumpSummary {
        steps: records.len(),
        layers: first.map_or(0, |r| r.layers.len()),
        tokens: first.map_or(0, |r| r.token_count),
        shapes: first.map_or_else(Vec::new, |r| r.layers.iter().map(|l| (l.height, l.width)).collect()),
        max_normalization_error: worst,
    }
}

/// Loads a dump and returns its summary. With `out`, also writes every
/// token's full-window accumulated map at `image` resolution as
/// `token,row,col,value`.
pub fn run(path: &Path, out: Option<&Path>, image: (usize, usize)) -> Result<DumpSummary> {
    let records = dump::read(path)?;
    let summary = summarize(&records);
    if let Some(out) = out {
        ensure_dir(out)?;
        let mut text = String::from("token,row,col,value\n");
        if !records.is_empty() {
            for token in 0..summary.tokens {
                let acc = accumulate(&records, token, 0..records.len(), image.0, image.1, MapSource::Raw)?;
                for r in 0..image.0 {
                    for c in 0..image.1 {
                        text.push_str(&format!("{token},{r},{c},{}\n", acc.grid.get(r, c)));
                    }
                }
            }
        }
        write_text(&out.join(ACCUMULATED_FILE), &text)?;
    }
    Ok(summary)
}
