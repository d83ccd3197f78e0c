use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// `seed_base + i` for `i < n`.
pub fn enumerate_seeds(seed_base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed_base.wrapping_add(i)).collect()
}

/// `--seeds` accepts a count or a file with one seed per line (`#` starts a
/// comment).
pub fn parse_seeds_arg(arg: &str, seed_base: u64) -> Result<Vec<u64>> {
    if let Ok(n) = arg.parse::<usize>() {
        if n == 0 {
            return Err(HarnessError::Config("--seeds must be at least 1".into()));
        }
        return Ok(enumerate_seeds(seed_base, n));
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let seeds = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.parse::<u64>()
                .map_err(|_| HarnessError::format(path, format!("line {}: bad seed {l:?}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(HarnessError::format(path, "no seeds listed"));
    }
    Ok(seeds)
}
