//! Learning per-category attribute tokens with the directional loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, seeded_gaussian, SeededRng};

use super::{category_pairs, delta_direction, mean_embedding, EmbeddingMatrix, LearnedTokens, PromptEncoder, ReferenceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub lr: f64,
    pub iters: usize,
    /// Tokens per category.
    pub q: usize,
    pub seed: u64,
    pub init_std: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Training stops once the mean loss is at or below this value.
    pub tol: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            iters: 2000,
            q: 3,
            seed: 0,
            init_std: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub tokens: Vec<LearnedTokens>,
    /// Mean directional loss before training and after every iteration run.
    pub trace: Vec<f64>,
}

/// Mean over category pairs of `1 - cos(dI_ij, dP_ij)`, where `dP_ij` is the
/// encoder direction between `[T; S^i]` and `[T; S^j]`.
pub struct DirectionalObjective<'a> {
    base: &'a EmbeddingMatrix,
    encoder: &'a dyn PromptEncoder,
    image_deltas: Vec<((usize, usize), Vec<f64>)>,
    categories: usize,
}

impl<'a> DirectionalObjective<'a> {
    pub fn new(base: &'a EmbeddingMatrix, refs: &ReferenceSet, encoder: &'a dyn PromptEncoder) -> Result<Self> {
        if encoder.input_dim() != base.dim() {
            return Err(Error::InvalidPrompt(format!(
                "encoder input dim {} does not match base prompt dim {}",
                encoder.input_dim(),
                base.dim()
            )));
        }
        if encoder.output_dim() != refs.dim() {
            return Err(Error::InvalidInput(format!(
                "encoder output dim {} does not match reference feature dim {}",
                encoder.output_dim(),
                refs.dim()
            )));
        }
        let k = refs.num_categories();
        let means = (0..k).map(|c| mean_embedding(refs, c)).collect::<Result<Vec<_>>>()?;
        let image_deltas = category_pairs(k)
            .map(|(i, j)| {
                let d = delta_direction(&means[i], &means[j])?;
                if norm(&d) == 0.0 {
                    return Err(Error::DegenerateDirection(format!(
                        "categories {i} and {j} have identical mean features"
                    )));
                }
                Ok(((i, j), d))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base,
            encoder,
            image_deltas,
            categories: k,
        })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    fn encode_all(&self, tokens: &[EmbeddingMatrix]) -> Result<(Vec<EmbeddingMatrix>, Vec<Vec<f64>>)> {
        if tokens.len() != self.categories {
            return Err(Error::InvalidInput(format!(
                "expected {} token groups, got {}",
                self.categories,
                tokens.len()
            )));
        }
        let prompts = tokens.iter().map(|t| self.base.vstack(t)).collect::<Result<Vec<_>>>()?;
        let feats = prompts.iter().map(|p| self.encoder.encode(p)).collect::<Result<Vec<_>>>()?;
        Ok((prompts, feats))
    }

    pub fn loss(&self, tokens: &[EmbeddingMatrix]) -> Result<f64> {
        let (_, feats) = self.encode_all(tokens)?;
        let mut total = 0.0;
        for ((i, j), di) in &self.image_deltas {
            let dp = delta_direction(&feats[*i], &feats[*j])?;
            total += super::directional_loss(di, &dp)?;
        }
        Ok(total / self.image_deltas.len() as f64)
    }

    /// Loss and its exact gradient w.r.t. each category's token rows.
    pub fn loss_and_grad(&self, tokens: &[EmbeddingMatrix]) -> Result<(f64, Vec<Vec<f64>>)> {
        let (prompts, feats) = self.encode_all(tokens)?;
        let pairs = self.image_deltas.len() as f64;
        let out_dim = self.encoder.output_dim();
        let mut feat_grads = vec![vec![0.0; out_dim]; self.categories];
        let mut total = 0.0;
        for ((i, j), a) in &self.image_deltas {
            let b = delta_direction(&feats[*i], &feats[*j])?;
            let (na, nb) = (norm(a), norm(&b));
            if nb == 0.0 {
                return Err(Error::DegenerateDirection(format!(
                    "prompt direction between categories {i} and {j} vanished"
                )));
            }
            let ab = dot(a, &b);
            total += 1.0 - ab / (na * nb);
            // d(1 - cos)/db = -(a / (|a||b|) - (a.b) b / (|a||b|^3))
            for d in 0..out_dim {
                let g = -(a[d] / (na * nb) - ab * b[d] / (na * nb * nb * nb)) / pairs;
                feat_grads[*i][d] += g;
                feat_grads[*j][d] -= g;
            }
        }
        let p = self.base.rows();
        let dim = self.base.dim();
        let grads = prompts
            .iter()
            .zip(&feat_grads)
            .map(|(prompt, g)| Ok(self.encoder.backward(prompt, g)?[p * dim..].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok((total / pairs, grads))
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(cfg: &LearnConfig, n: usize) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Learns `q` tokens per category by full-batch Adam on the mean pairwise
/// directional loss, for at most `iters` steps. The base prompt is never
/// modified.
pub fn learn_tokens(
    base: &EmbeddingMatrix,
    refs: &ReferenceSet,
    encoder: &dyn PromptEncoder,
    config: &LearnConfig,
) -> Result<LearnOutcome> {
    if config.q == 0 {
        return Err(Error::InvalidInput("token length q must be at least 1".into()));
    }
    let objective = DirectionalObjective::new(base, refs, encoder)?;
    let k = objective.categories();
    let dim = base.dim();
    let per_cat = config.q * dim;

    let mut rng = SeededRng::new(config.seed, 0x5eed);
    let mut params: Vec<f64> = seeded_gaussian(&mut rng, &[k, config.q, dim])
        .into_iter()
        .map(|x| x * config.init_std)
        .collect();
    let unpack = |params: &[f64]| -> Result<Vec<EmbeddingMatrix>> {
        params
            .chunks_exact(per_cat)
            .map(|c| EmbeddingMatrix::new(config.q, dim, c.to_vec()))
            .collect()
    };

    let mut adam = Adam::new(config, params.len());
    let mut trace = Vec::with_capacity(config.iters + 1);
    let (mut loss, mut grads) = objective.loss_and_grad(&unpack(&params)?)?;
    trace.push(loss);
    for _ in 0..config.iters {
        if loss <= config.tol {
            break;
        }
        let flat: Vec<f64> = grads.concat();
        adam.step(&mut params, &flat);
        (loss, grads) = objective.loss_and_grad(&unpack(&params)?)?;
        trace.push(loss);
    }

    let tokens = unpack(&params)?
        .into_iter()
        .enumerate()
        .map(|(c, t)| LearnedTokens::new(c, t))
        .collect();
    Ok(LearnOutcome { tokens, trace })
}
