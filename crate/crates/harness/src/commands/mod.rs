//! Subcommand implementations. Each takes fully resolved inputs, writes
//! into its run directory and returns the run manifest.

pub mod ablate;
pub mod dump_attn;
pub mod evaluate;
pub mod generate;
pub mod learn;
pub mod switch;

use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// CSV text from a header and pre-formatted rows.
pub(crate) fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}
