use crate::error::{Error, Result};
use crate::numerics::{seeded_gaussian, SeededRng};

use super::EmbeddingMatrix;

/// Maps a prompt embedding to one pooled vector in the image feature space.
///
/// Implementations must be differentiable: [`PromptEncoder::backward`]
/// returns the exact vector-Jacobian product with respect to every prompt
/// row, which is what the token learner optimises through.
pub trait PromptEncoder: Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn encode(&self, prompt: &EmbeddingMatrix) -> Result<Vec<f64>>;

    /// Gradient of `<grad_output, encode(prompt)>` w.r.t. the prompt, as a
    /// row-major `rows x input_dim` buffer.
    fn backward(&self, prompt: &EmbeddingMatrix, grad_output: &[f64]) -> Result<Vec<f64>>;
}

/// Mean-pools token rows, then applies a fixed seeded linear projection.
#[derive(Debug, Clone)]
pub struct ToyPromptEncoder {
    input_dim: usize,
    output_dim: usize,
    /// `output_dim x input_dim`, row-major.
    weight: Vec<f64>,
}

impl ToyPromptEncoder {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, 0x7e47);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let weight = seeded_gaussian(&mut rng, &[output_dim, input_dim])
            .into_iter()
            .map(|w| w * scale)
            .collect();
        Self {
            input_dim,
            output_dim,
            weight,
        }
    }

    /// Projects a single token-space vector (no pooling).
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.input_dim)
            .map(|row| row.iter().zip(v).map(|(w, x)| w * x).sum())
            .collect()
    }

    fn check(&self, prompt: &EmbeddingMatrix) -> Result<()> {
        if prompt.dim() != self.input_dim {
            return Err(Error::InvalidPrompt(format!(
                "encoder expects dim {}, prompt has {}",
                self.input_dim,
                prompt.dim()
            )));
        }
        Ok(())
    }
}

impl PromptEncoder for ToyPromptEncoder {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn encode(&self, prompt: &EmbeddingMatrix) -> Result<Vec<f64>> {
        self.check(prompt)?;
        let mut pooled = vec![0.0; self.input_dim];
        for row in prompt.iter_rows() {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        let n = prompt.rows() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        Ok(self.project(&pooled))
    }

    fn backward(&self, prompt: &EmbeddingMatrix, grad_output: &[f64]) -> Result<Vec<f64>> {
        self.check(prompt)?;
        if grad_output.len() != self.output_dim {
            return Err(Error::InvalidInput(format!(
                "gradient has dim {}, encoder output is {}",
                grad_output.len(),
                self.output_dim
            )));
        }
        let mut row_grad = vec![0.0; self.input_dim];
        for (w_row, g) in self.weight.chunks_exact(self.input_dim).zip(grad_output) {
            for (r, w) in row_grad.iter_mut().zip(w_row) {
                *r += g * w;
            }
        }
        let n = prompt.rows() as f64;
        row_grad.iter_mut().for_each(|r| *r /= n);
        Ok(row_grad.repeat(prompt.rows()))
    }
}
