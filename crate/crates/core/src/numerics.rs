//! Small deterministic numeric kernel shared by the rest of the crate.
//!
//! Everything here works on plain `f64` slices in row-major order; the only
//! heavier dependency is `nalgebra`, used for the symmetric eigendecomposition
//! behind [`matrix_sqrt_psd`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `height x width` grid of finite reals in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Elementwise `self += other`. Shapes must match.
    pub fn add_assign(&mut self, other: &Grid2D) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::InvalidInput(format!(
                "grid shape mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }
}

/// Deterministic generator keyed by `(seed, stream)`.
///
/// Backed by ChaCha8 with the stream selecting an independent keystream, so
/// one seed can drive many trajectories without overlap.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

/// Draws `prod(shape)` i.i.d. standard normal values from `rng`.
pub fn seeded_gaussian(rng: &mut SeededRng, shape: &[usize]) -> Vec<f64> {
    let n: usize = shape.iter().product();
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// Row-wise softmax of a row-major `rows x cols` matrix, stabilised by
/// subtracting each row's maximum.
pub fn softmax_rows(logits: &[f64], cols: usize) -> Result<Vec<f64>> {
    if cols == 0 || logits.len() % cols != 0 {
        return Err(Error::InvalidInput(format!(
            "softmax input of length {} is not a multiple of {cols} columns",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax logits must be finite".into()));
    }
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(cols) {
        softmax_in_place(row);
    }
    Ok(out)
}

/// Softmax of one finite row, in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "cosine similarity of vectors with dims {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::DegenerateDirection(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

const CATMULL_ROM_A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5` (Catmull-Rom).
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for one output coordinate along an axis.
fn axis_taps(out_len: usize, src_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = src_len as f64 / out_len as f64;
    let last = src_len as isize - 1;
    (0..out_len)
        .map(|o| {
            let s = (o as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let t = s - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as isize - 1;
                idx[k] = (base + offset).clamp(0, last) as usize;
                w[k] = cubic_kernel(t - offset as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic (Catmull-Rom) upscaling with half-pixel centres and clamped edges.
pub fn bicubic_upscale(src: &Grid2D, out_h: usize, out_w: usize) -> Result<Grid2D> {
    if out_h < src.height || out_w < src.width {
        return Err(Error::UnsupportedResize {
            from_h: src.height,
            from_w: src.width,
            to_h: out_h,
            to_w: out_w,
        });
    }
    if out_h == src.height && out_w == src.width {
        return Ok(src.clone());
    }
    let cols = axis_taps(out_w, src.width);
    let rows = axis_taps(out_h, src.height);

    // Horizontal pass: src.height x out_w.
    let mut horiz = vec![0.0; src.height * out_w];
    for r in 0..src.height {
        let src_row = &src.values[r * src.width..(r + 1) * src.width];
        let dst_row = &mut horiz[r * out_w..(r + 1) * out_w];
        for (dst, (idx, w)) in dst_row.iter_mut().zip(&cols) {
            *dst = (0..4).map(|k| w[k] * src_row[idx[k]]).sum();
        }
    }

    let mut out = vec![0.0; out_h * out_w];
    for (o, (idx, w)) in rows.iter().enumerate() {
        let dst_row = &mut out[o * out_w..(o + 1) * out_w];
        for k in 0..4 {
            let src_row = &horiz[idx[k] * out_w..(idx[k] + 1) * out_w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += w[k] * s;
            }
        }
    }
    Grid2D::new(out_h, out_w, out)
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues in `[-1e-9, 0)` (relative to the matrix scale) are clamped to
/// zero; anything more negative is rejected.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("matrix has non-finite entries".into()));
    }
    let scale = a.amax().max(1.0);
    let tol = 1e-9 * scale;
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::InvalidMatrix(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -tol {
            return Err(Error::InvalidMatrix(format!(
                "matrix is indefinite (eigenvalue {min:e})"
            )));
        }
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
