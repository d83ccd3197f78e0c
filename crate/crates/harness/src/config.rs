//! Experiment configuration (JSON). Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use fairqueue_core::denoiser::DenoiserConfig;
use fairqueue_core::prompt::LearnConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::spec::ScheduleSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub denoiser: DenoiserConfig,
    pub prompts: PromptConfig,
    /// Sample `i` of a run uses seed `seed_base + i`.
    pub seed_base: u64,
    pub schedule: ScheduleSpec,
    pub learn: LearnSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            denoiser: DenoiserConfig::default(),
            prompts: PromptConfig::default(),
            seed_base: 0,
            schedule: ScheduleSpec::default(),
            learn: LearnSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Where prompt embeddings come from. Missing files fall back to seeded
/// synthetic embeddings of the denoiser's token dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Base prompt `T` (FQEM, one row per token).
    pub base: Option<PathBuf>,
    /// One FQEM file per category with that category's learned tokens.
    pub learned: Vec<PathBuf>,
    /// One FQEM file per category with the hard-prompt attribute words.
    pub hard: Vec<PathBuf>,
    pub synthetic_seed: u64,
    /// Learned tokens per category for the synthetic bank.
    pub q: usize,
    /// Attribute words per category for the synthetic hard prompts.
    pub hard_len: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            base: None,
            learned: Vec::new(),
            hard: Vec::new(),
            synthetic_seed: 7,
            q: 3,
            hard_len: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    /// Reference image features (FQEM) with per-row categories in the manifest.
    pub refs: Option<PathBuf>,
    pub encoder_seed: u64,
    pub optimizer: LearnConfig,
}

impl Default for LearnSection {
    fn default() -> Self {
        Self {
            refs: None,
            encoder_seed: 0,
            optimizer: LearnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub feature_dim: usize,
    pub feature_seed: u64,
    /// Constant(T) samples used to place the toy classifier's cut.
    pub calibration_samples: usize,
    pub calibration_seed_base: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            feature_seed: 0,
            calibration_samples: 200,
            calibration_seed_base: 1 << 32,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::schema(origin, e.to_string()))
    }

    /// Loads a config file and makes every relative path absolute with
    /// respect to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dir = fs::canonicalize(&dir).unwrap_or(dir);
        cfg.resolve_paths(&dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The default config, or the file at `path`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.prompts.base.iter_mut().for_each(fix);
        self.prompts.learned.iter_mut().for_each(fix);
        self.prompts.hard.iter_mut().for_each(fix);
        self.learn.refs.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        self.denoiser
            .validate()
            .map_err(|e| HarnessError::schema("denoiser", e.to_string()))?;
        let k = self.categories();
        if self.prompts.q == 0 {
            return Err(HarnessError::schema("prompts.q", "must be at least 1"));
        }
        if self.prompts.hard_len == 0 {
            return Err(HarnessError::schema("prompts.hard_len", "must be at least 1"));
        }
        for (field, files) in [("prompts.learned", &self.prompts.learned), ("prompts.hard", &self.prompts.hard)] {
            if !files.is_empty() && files.len() != k {
                return Err(HarnessError::schema(
                    field,
                    format!("expected one file per category ({k}), got {}", files.len()),
                ));
            }
        }
        if self.eval.feature_dim == 0 {
            return Err(HarnessError::schema("eval.feature_dim", "must be at least 1"));
        }
        if self.eval.calibration_samples == 0 {
            return Err(HarnessError::schema("eval.calibration_samples", "must be at least 1"));
        }
        self.schedule.validate(self.denoiser.steps)?;
        Ok(())
    }

    /// Number of categories of the planted attribute.
    pub fn categories(&self) -> usize {
        self.denoiser.category_bias.len()
    }
}
