use std::path::{Path, PathBuf};

use fairqueue_core::numerics::{seeded_gaussian, SeededRng};
use fairqueue_core::prompt::{
    direction_report, format as fqem, learn_tokens, EmbeddingMatrix, LearnOutcome, PromptEncoder, ReferenceSet,
    ToyPromptEncoder,
};
use serde_json::json;

use super::{csv, ensure_dir, write_text};
use crate::bank::PromptBank;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;

pub const TRACE_FILE: &str = "loss_trace.csv";
pub const DIRECTIONS_FILE: &str = "directions.csv";

pub fn token_file(category: usize) -> String {
    format!("tokens_{category}.fqem")
}

/// Reference features whose category directions the encoder can reproduce
/// exactly: each category's features are `encode([T; S*_k])` plus paired
/// `+e`/`-e` perturbations, so the category mean is the encoded prompt.
pub fn realizable_refs(
    base: &EmbeddingMatrix,
    encoder: &dyn PromptEncoder,
    categories: usize,
    q: usize,
    pairs_per_category: usize,
    seed: u64,
) -> fairqueue_core::Result<(EmbeddingMatrix, Vec<usize>)> {
    let mut rng = SeededRng::new(seed, 0x2ef5);
    let dim = base.dim();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for k in 0..categories {
        let target = EmbeddingMatrix::new(q, dim, seeded_gaussian(&mut rng, &[q, dim]))?;
        let centre = encoder.encode(&base.vstack(&target)?)?;
        for _ in 0..pairs_per_category {
            let e = seeded_gaussian(&mut rng, &[centre.len()]);
            rows.push(centre.iter().zip(&e).map(|(c, e)| c + 0.1 * e).collect::<Vec<_>>());
            rows.push(centre.iter().zip(&e).map(|(c, e)| c - 0.1 * e).collect::<Vec<_>>());
            labels.extend([k, k]);
        }
    }
    Ok((EmbeddingMatrix::from_rows(&rows)?, labels))
}

pub fn load_refs(path: &Path) -> Result<ReferenceSet> {
    let (features, manifest) = fqem::read(path)?;
    let categories = manifest
        .categories
        .ok_or_else(|| HarnessError::format(path, "reference manifest lists no categories"))?;
    Ok(ReferenceSet::from_labelled(&features, &categories)?)
}

#[derive(Debug)]
pub struct LearnRun {
    pub manifest: RunManifest,
    pub outcome: LearnOutcome,
    pub files: Vec<PathBuf>,
}

/// Learns tokens against `config.learn.refs` and writes one FQEM file per
/// category, the loss trace and a per-pair direction report.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<LearnRun> {
    let refs_path = config
        .learn
        .refs
        .as_deref()
        .ok_or_else(|| HarnessError::Config("learn.refs must name a reference feature file".into()))?;
    let refs = load_refs(refs_path)?;
    let bank = PromptBank::from_config(config)?;
    let base = bank.base().base().clone();
    let encoder = ToyPromptEncoder::new(base.dim(), refs.dim(), config.learn.encoder_seed);
    let mut optimizer = config.learn.optimizer.clone();
    optimizer.q = config.prompts.q;
    let outcome = learn_tokens(&base, &refs, &encoder, &optimizer)?;

    ensure_dir(out)?;
    let mut manifest = RunManifest::new(
        "learn-tokens",
        config,
        None,
        Vec::new(),
        json!({ "refs": refs_path, "optimizer": optimizer }),
    );
    let mut files = Vec::new();
    for group in &outcome.tokens {
        let name = token_file(group.category);
        let labels = (0..group.len()).map(|i| format!("S{i}")).collect();
        let tokens = group.tokens.clone().with_labels(labels)?;
        let path = out.join(&name);
        fqem::write(&path, &tokens, Some(&vec![group.category; group.len()]))?;
        manifest.outputs.push(name);
        files.push(path);
    }

    let trace = csv(
        "iter,mean_l_dir",
        outcome.trace.iter().enumerate().map(|(i, l)| format!("{i},{l}")),
    );
    write_text(&out.join(TRACE_FILE), &trace)?;
    manifest.outputs.push(TRACE_FILE.into());

    let learned_feats = outcome
        .tokens
        .iter()
        .map(|g| encoder.encode(&base.vstack(&g.tokens)?))
        .collect::<fairqueue_core::Result<Vec<_>>>()?;
    let hard_feats = (0..refs.num_categories())
        .map(|k| Ok(encoder.encode(bank.hard(k)?.embedding())?))
        .collect::<Result<Vec<_>>>()?;
    let rows = direction_report(&refs, &learned_feats, &hard_feats)?;
    let report = csv(
        "i,j,l_dir_learned,l_dir_hard",
        rows.iter().map(|r| format!("{},{},{},{}", r.i, r.j, r.learned, r.hard)),
    );
    write_text(&out.join(DIRECTIONS_FILE), &report)?;
    manifest.outputs.push(DIRECTIONS_FILE.into());

    manifest.write(out)?;
    Ok(LearnRun { manifest, outcome, files })
}
