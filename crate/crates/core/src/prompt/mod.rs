//! Prompt and embedding types, category directions and the directional loss.

mod encoder;
pub mod format;
mod learn;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::cosine_similarity;

pub use encoder::{PromptEncoder, ToyPromptEncoder};
pub use learn::{learn_tokens, DirectionalObjective, LearnConfig, LearnOutcome};

/// A `rows x dim` block of embeddings, row-major, with optional row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "embedding matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::InvalidInput(format!(
                "embedding matrix {rows}x{dim} needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding contains non-finite values".into()));
        }
        Ok(Self {
            rows,
            dim,
            data,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("rows have differing dimensions".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} rows",
                labels.len(),
                self.rows
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label for row `i`, falling back to `fallback{i}`.
    pub fn label_or(&self, i: usize, fallback: &str) -> String {
        self.labels
            .as_ref()
            .map(|l| l[i].clone())
            .unwrap_or_else(|| format!("{fallback}{i}"))
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput(format!(
                "cannot stack dims {} and {}",
                self.dim, other.dim
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let labels = match (&self.labels, &other.labels) {
            (None, None) => None,
            _ => Some(
                (0..self.rows)
                    .map(|i| self.label_or(i, "t"))
                    .chain((0..other.rows).map(|i| other.label_or(i, "s")))
                    .collect(),
            ),
        };
        Ok(EmbeddingMatrix {
            rows: self.rows + other.rows,
            dim: self.dim,
            data,
            labels,
        })
    }
}

/// The `q` learned tokens for one category of one sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedTokens {
    pub category: usize,
    pub tokens: EmbeddingMatrix,
}

impl LearnedTokens {
    pub fn new(category: usize, tokens: EmbeddingMatrix) -> Self {
        Self { category, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

/// A base prompt with zero or more attribute token groups appended.
///
/// With no groups this is a plain prompt (the base prompt or any other
/// natural-language prompt) and `tsa_token_range` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedPrompt {
    base: EmbeddingMatrix,
    groups: Vec<LearnedTokens>,
    tsa_token_range: Range<usize>,
    embedding: EmbeddingMatrix,
}

impl ComposedPrompt {
    pub fn plain(base: EmbeddingMatrix) -> Self {
        let p = base.rows();
        Self {
            embedding: base.clone(),
            base,
            groups: Vec::new(),
            tsa_token_range: p..p,
        }
    }

    pub fn base(&self) -> &EmbeddingMatrix {
        &self.base
    }

    pub fn groups(&self) -> &[LearnedTokens] {
        &self.groups
    }

    pub fn is_plain(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn tsa_token_range(&self) -> Range<usize> {
        self.tsa_token_range.clone()
    }

    /// Row span of group `g` inside the full prompt.
    pub fn group_range(&self, g: usize) -> Option<Range<usize>> {
        let group = self.groups.get(g)?;
        let start = self.base.rows() + self.groups[..g].iter().map(LearnedTokens::len).sum::<usize>();
        Some(start..start + group.len())
    }

    /// The full `[T; S^1; ...; S^m]` embedding.
    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.embedding
    }

    pub fn rows(&self) -> usize {
        self.embedding.rows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    /// Human-readable token labels: base labels, then `S<i>` (single group)
    /// or `S<g>.<i>` for the appended tokens.
    pub fn token_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.base.rows()).map(|i| self.base.label_or(i, "t")).collect();
        let single = self.groups.len() == 1;
        for (g, group) in self.groups.iter().enumerate() {
            for i in 0..group.len() {
                labels.push(match group.tokens.labels() {
                    Some(l) => l[i].clone(),
                    None if single => format!("S{i}"),
                    None => format!("S{g}.{i}"),
                });
            }
        }
        labels
    }
}

/// Appends one learned group per attribute to `base`.
///
/// `bank[a]` holds the learned groups of attribute `a` (one per category) and
/// `selections[a]` picks the category for that attribute.
pub fn compose_prompt(
    base: &EmbeddingMatrix,
    bank: &[Vec<LearnedTokens>],
    selections: &[usize],
) -> Result<ComposedPrompt> {
    if bank.len() != selections.len() {
        return Err(Error::InvalidSelection(format!(
            "{} selections for {} attributes",
            selections.len(),
            bank.len()
        )));
    }
    let mut groups = Vec::with_capacity(bank.len());
    for (a, (choices, &k)) in bank.iter().zip(selections).enumerate() {
        let group = choices
            .iter()
            .find(|g| g.category == k)
            .ok_or_else(|| Error::InvalidSelection(format!("attribute {a} has no category {k}")))?;
        if group.tokens.dim() != base.dim() {
            return Err(Error::InvalidSelection(format!(
                "attribute {a} tokens have dim {}, base has {}",
                group.tokens.dim(),
                base.dim()
            )));
        }
        groups.push(group.clone());
    }
    compose_groups(base, groups)
}

/// Builds a composed prompt from explicit groups.
pub fn compose_groups(base: &EmbeddingMatrix, groups: Vec<LearnedTokens>) -> Result<ComposedPrompt> {
    let mut embedding = base.clone();
    for g in &groups {
        embedding = embedding.vstack(&g.tokens)?;
    }
    let p = base.rows();
    Ok(ComposedPrompt {
        base: base.clone(),
        tsa_token_range: p..embedding.rows(),
        groups,
        embedding,
    })
}

/// Every composed prompt over the Cartesian product of attribute categories.
pub fn compose_all(base: &EmbeddingMatrix, bank: &[Vec<LearnedTokens>]) -> Result<Vec<ComposedPrompt>> {
    let mut selections: Vec<Vec<usize>> = vec![Vec::new()];
    for choices in bank {
        selections = selections
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |g| {
                    let mut s = prefix.clone();
                    s.push(g.category);
                    s
                })
            })
            .collect();
    }
    selections.iter().map(|s| compose_prompt(base, bank, s)).collect()
}

/// Labelled reference image features, one matrix per category.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    categories: Vec<EmbeddingMatrix>,
}

impl ReferenceSet {
    pub fn new(categories: Vec<EmbeddingMatrix>) -> Result<Self> {
        if categories.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "reference set needs at least 2 categories, got {}",
                categories.len()
            )));
        }
        let dim = categories[0].dim();
        if categories.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidInput("reference feature dims differ".into()));
        }
        Ok(Self { categories })
    }

    /// Groups rows of `features` by their category label.
    pub fn from_labelled(features: &EmbeddingMatrix, categories: &[usize]) -> Result<Self> {
        if categories.len() != features.rows() {
            return Err(Error::InvalidInput(format!(
                "{} category labels for {} feature rows",
                categories.len(),
                features.rows()
            )));
        }
        let k = categories.iter().max().map_or(0, |m| m + 1);
        let mut grouped: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
        for (row, &c) in features.iter_rows().zip(categories) {
            grouped[c].push(row.to_vec());
        }
        let mats = grouped
            .iter()
            .enumerate()
            .map(|(c, rows)| {
                if rows.is_empty() {
                    Err(Error::EmptyCategory(c))
                } else {
                    EmbeddingMatrix::from_rows(rows)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mats)
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn dim(&self) -> usize {
        self.categories[0].dim()
    }

    pub fn category(&self, k: usize) -> Option<&EmbeddingMatrix> {
        self.categories.get(k)
    }
}

/// Arithmetic mean of the features of category `k`.
pub fn mean_embedding(refs: &ReferenceSet, k: usize) -> Result<Vec<f64>> {
    let cat = refs.category(k).ok_or(Error::EmptyCategory(k))?;
    let mut acc = vec![0.0; cat.dim()];
    for row in cat.iter_rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = cat.rows() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Elementwise `a - b`.
pub fn delta_direction(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "direction between dims {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// `1 - cos(dI, dP)`, in `[0, 2]`.
pub fn directional_loss(d_image: &[f64], d_prompt: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(d_image, d_prompt)?)
}

/// All unordered category pairs `(i, j)` with `i < j`.
pub fn category_pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| ((i + 1)..k).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionRow {
    pub i: usize,
    pub j: usize,
    /// `L_dir(dI, dP)` for the learned prompts.
    pub learned: f64,
    /// `L_dir(dI, dF)` for the hard prompts.
    pub hard: f64,
}

/// Per-pair alignment of image directions with learned-prompt and
/// hard-prompt directions. Prompt features are per category, already in the
/// reference feature space.
pub fn direction_report(
    refs: &ReferenceSet,
    learned_features: &[Vec<f64>],
    hard_features: &[Vec<f64>],
) -> Result<Vec<DirectionRow>> {
    let k = refs.num_categories();
    if learned_features.len() != k || hard_features.len() != k {
        return Err(Error::InvalidInput(format!(
            "expected {k} learned and hard prompt features, got {} and {}",
            learned_features.len(),
            hard_features.len()
        )));
    }
    let means = (0..k).map(|c| mean_embedding(refs, c)).collect::<Result<Vec<_>>>()?;
    category_pairs(k)
        .map(|(i, j)| {
            let di = delta_direction(&means[i], &means[j])?;
            let dp = delta_direction(&learned_features[i], &learned_features[j])?;
            let df = delta_direction(&hard_features[i], &hard_features[j])?;
            Ok(DirectionRow {
                i,
                j,
                learned: directional_loss(&di, &dp)?,
                hard: directional_loss(&di, &df)?,
            })
        })
        .collect()
}
