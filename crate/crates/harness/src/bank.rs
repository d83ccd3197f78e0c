//! Prompt bank: the base prompt plus per-category learned and hard tokens.

use std::path::Path;
use std::sync::Arc;

use fairqueue_core::numerics::{seeded_gaussian, SeededRng};
use fairqueue_core::prompt::{compose_groups, format as fqem, ComposedPrompt, EmbeddingMatrix, LearnedTokens};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Token labels of the synthetic base prompt.
pub const SYNTHETIC_BASE: [&str; 5] = ["a", "headshot", "of", "a", "person"];

#[derive(Debug, Clone)]
pub struct PromptBank {
    base: Arc<ComposedPrompt>,
    learned: Vec<Arc<ComposedPrompt>>,
    hard: Vec<Arc<ComposedPrompt>>,
}

fn gaussian_rows(rows: usize, dim: usize, seed: u64, stream: u64) -> EmbeddingMatrix {
    let data = seeded_gaussian(&mut SeededRng::new(seed, stream), &[rows, dim]);
    EmbeddingMatrix::new(rows, dim, data).expect("nonempty shape")
}

pub fn synthetic_base(dim: usize, seed: u64) -> EmbeddingMatrix {
    gaussian_rows(SYNTHETIC_BASE.len(), dim, seed, 0xba5e)
        .with_labels(SYNTHETIC_BASE.iter().map(|s| s.to_string()).collect())
        .expect("label count matches")
}

fn load_matrix(path: &Path, dim: usize) -> Result<EmbeddingMatrix> {
    let (m, _) = fqem::read(path)?;
    if m.dim() != dim {
        return Err(HarnessError::format(
            path,
            format!("embedding dim {} does not match the denoiser token dim {dim}", m.dim()),
        ));
    }
    Ok(m)
}

impl PromptBank {
    pub fn new(base: EmbeddingMatrix, learned: Vec<LearnedTokens>, hard: Vec<LearnedTokens>) -> Result<Self> {
        let compose = |groups: Vec<LearnedTokens>| -> Result<Vec<Arc<ComposedPrompt>>> {
            groups
                .into_iter()
                .map(|g| Ok(Arc::new(compose_groups(&base, vec![g])?)))
                .collect()
        };
        let learned = compose(learned)?;
        let hard = compose(hard)?;
        Ok(Self {
            base: Arc::new(ComposedPrompt::plain(base.clone())),
            learned,
            hard,
        })
    }

    /// Builds the bank from files named in the config, or seeded synthetic
    /// embeddings where none are given.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let dim = cfg.denoiser.token_dim;
        let p = &cfg.prompts;
        let k = cfg.categories();
        let base = match &p.base {
            Some(path) => load_matrix(path, dim)?,
            None => synthetic_base(dim, p.synthetic_seed),
        };
        let group = |files: &[std::path::PathBuf], len: usize, stream: u64, word: &str| -> Result<Vec<LearnedTokens>> {
            if files.is_empty() {
                return Ok((0..k)
                    .map(|c| {
                        let labels = (0..len).map(|i| format!("{word}{c}.{i}")).collect();
                        let tokens = gaussian_rows(len, dim, p.synthetic_seed, stream + c as u64)
                            .with_labels(labels)
                            .expect("label count matches");
                        LearnedTokens::new(c, tokens)
                    })
                    .collect());
            }
            files
                .iter()
                .enumerate()
                .map(|(c, path)| Ok(LearnedTokens::new(c, load_matrix(path, dim)?)))
                .collect()
        };
        let learned = group(&p.learned, p.q, 0x5000, "S")?;
        let hard = group(&p.hard, p.hard_len, 0x4a00, "w")?;
        Self::new(base, learned, hard)
    }

    pub fn categories(&self) -> usize {
        self.learned.len()
    }

    pub fn base(&self) -> &Arc<ComposedPrompt> {
        &self.base
    }

    pub fn learned(&self, category: usize) -> Result<&Arc<ComposedPrompt>> {
        self.learned
            .get(category)
            .ok_or_else(|| HarnessError::Config(format!("no learned prompt for category {category}")))
    }

    pub fn hard(&self, category: usize) -> Result<&Arc<ComposedPrompt>> {
        self.hard
            .get(category)
            .ok_or_else(|| HarnessError::Config(format!("no hard prompt for category {category}")))
    }
}
