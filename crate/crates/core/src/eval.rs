//! Fairness and quality metrics over pluggable classifiers and feature
//! providers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::denoiser::Image;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, dot, matrix_sqrt_psd, norm, seeded_gaussian, SeededRng};

/// Added to both covariances before the matrix square root.
pub const COVARIANCE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryDistribution {
    counts: Vec<u64>,
}

impl CategoryDistribution {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a category distribution needs K >= 2, got {}",
                counts.len()
            )));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(predictions: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k];
        for &p in predictions {
            if p >= k {
                return Err(Error::InvalidInput(format!("category {p} out of range for K = {k}")));
            }
            counts[p] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `|| p_hat - uniform ||_2`.
pub fn fairness_discrepancy(dist: &CategoryDistribution) -> Result<f64> {
    let n = dist.total();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let u = 1.0 / dist.k() as f64;
    let mut terms: Vec<f64> = dist
        .counts()
        .iter()
        .map(|&c| {
            let d = c as f64 / n as f64 - u;
            d * d
        })
        .collect();
    // Summing in sorted order makes the result exactly permutation-invariant.
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().sqrt())
}

/// Mean cosine similarity between each feature and the base-prompt embedding.
pub fn text_alignment(features: &[Vec<f64>], base_embedding: &[f64]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptySample);
    }
    if norm(base_embedding) == 0.0 {
        return Err(Error::DegenerateFeature("base prompt embedding has zero norm".into()));
    }
    let mut total = 0.0;
    for (i, f) in features.iter().enumerate() {
        if f.len() != base_embedding.len() {
            return Err(Error::InvalidInput(format!(
                "feature {i} has dim {}, base embedding has dim {}",
                f.len(),
                base_embedding.len()
            )));
        }
        if norm(f) == 0.0 {
            return Err(Error::DegenerateFeature(format!("feature {i} has zero norm")));
        }
        total += cosine_similarity(f, base_embedding)?;
    }
    Ok(total / features.len() as f64)
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 samples for a covariance, got {n}")));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::InvalidInput("features must share a nonzero dim".into()));
        }
        let mut mean = DVector::zeros(d);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for f in features {
            let c = DVector::from_column_slice(f) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        Ok(Self { mean, cov })
    }
}

/// Frechet distance between two Gaussians. `Tr((S1 S2)^(1/2))` is taken as
/// `Tr((B S2 B)^(1/2))` with `B = S1^(1/2)`, which keeps every root symmetric.
pub fn frechet_distance_from_stats(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let d = a.mean.len();
    if b.mean.len() != d || a.cov.shape() != (d, d) || b.cov.shape() != (d, d) {
        return Err(Error::InvalidInput("Gaussian statistics have mismatched dims".into()));
    }
    let reg = DMatrix::<f64>::identity(d, d) * COVARIANCE_EPS;
    let s1 = &a.cov + &reg;
    let s2 = &b.cov + &reg;
    let root1 = matrix_sqrt_psd(&s1)?;
    let inner = &root1 * &s2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = matrix_sqrt_psd(&inner)?.trace();
    let shift = (&a.mean - &b.mean).norm_squared();
    Ok((shift + s1.trace() + s2.trace() - 2.0 * cross).max(0.0))
}

pub fn frechet_distance(feats_a: &[Vec<f64>], feats_b: &[Vec<f64>]) -> Result<f64> {
    let a = GaussianStats::from_features(feats_a)?;
    let b = GaussianStats::from_features(feats_b)?;
    if a.mean.len() != b.mean.len() {
        return Err(Error::InvalidInput(format!(
            "feature dims differ: {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    frechet_distance_from_stats(&a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticDistances {
    /// `(sample_id, 1 - cos)` in the order of the generated set.
    pub pairs: Vec<(String, f64)>,
    pub mean: f64,
}

impl SemanticDistances {
    /// Wraps externally computed per-sample scores.
    pub fn from_scores(pairs: Vec<(String, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySample);
        }
        let mean = pairs.iter().map(|(_, s)| s).sum::<f64>() / pairs.len() as f64;
        Ok(Self { pairs, mean })
    }
}

/// `1 - a.b / sqrt((a.a)(b.b))`. Written this way `d(x, x)` is exactly 0
/// (`sqrt(fl(s^2)) = s` under round-to-nearest) and `d(a, b) = d(b, a)`
/// bit for bit.
fn pair_distance(id: &str, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("sample {id}: feature dims differ")));
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateFeature(format!("sample {id} has a zero-norm feature")));
    }
    let cos = (dot(a, b) / (aa * bb).sqrt()).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// `1 - cos(ref, gen)` for every sample id present in both sets.
pub fn semantic_distance(reference: &[(String, Vec<f64>)], generated: &[(String, Vec<f64>)]) -> Result<SemanticDistances> {
    let refs: BTreeMap<&str, &Vec<f64>> = reference.iter().map(|(id, f)| (id.as_str(), f)).collect();
    let gens: BTreeMap<&str, &Vec<f64>> = generated.iter().map(|(id, f)| (id.as_str(), f)).collect();
    if let Some(id) = refs.keys().find(|id| !gens.contains_key(*id)) {
        return Err(Error::MissingPair(format!("reference sample {id} has no generated counterpart")));
    }
    let mut pairs = Vec::with_capacity(generated.len());
    for (id, g) in generated {
        let r = refs
            .get(id.as_str())
            .ok_or_else(|| Error::MissingPair(format!("generated sample {id} has no reference counterpart")))?;
        pairs.push((id.clone(), pair_distance(id, r, g)?));
    }
    SemanticDistances::from_scores(pairs)
}

/// Deterministic image -> feature map.
pub trait FeatureProvider: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn features(&self, image: &Image) -> Result<Vec<f64>>;
}

/// Flattens the image, applies a fixed seeded Gaussian projection and
/// normalises to unit length.
#[derive(Debug, Clone)]
pub struct ToyFeatureProvider {
    input_len: usize,
    dim: usize,
    weight: Vec<f64>,
}

impl ToyFeatureProvider {
    pub fn new(input_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, 0xfea7);
        let scale = 1.0 / (input_len as f64).sqrt();
        let weight = seeded_gaussian(&mut rng, &[dim, input_len])
            .into_iter()
            .map(|w| w * scale)
            .collect();
        Self { input_len, dim, weight }
    }

    pub fn for_image(height: usize, width: usize, dim: usize, seed: u64) -> Self {
        Self::new(Image::CHANNELS * height * width, dim, seed)
    }
}

impl FeatureProvider for ToyFeatureProvider {
    fn name(&self) -> &str {
        "toy-projection"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, image: &Image) -> Result<Vec<f64>> {
        if image.data.len() != self.input_len {
            return Err(Error::InvalidInput(format!(
                "image has {} values, provider expects {}",
                image.data.len(),
                self.input_len
            )));
        }
        let mut f: Vec<f64> = self
            .weight
            .chunks_exact(self.input_len)
            .map(|row| row.iter().zip(&image.data).map(|(w, x)| w * x).sum())
            .collect();
        let n = norm(&f);
        if n == 0.0 {
            return Err(Error::DegenerateFeature("image projects to the zero vector".into()));
        }
        f.iter_mut().for_each(|x| *x /= n);
        Ok(f)
    }
}

/// Total, deterministic image -> category map.
pub trait Classifier: Sync {
    fn name(&self) -> &str;
    fn categories(&self) -> usize;
    fn classify(&self, image: &Image) -> usize;
}

/// Thresholds the channel-0 mean: above the cut is category 1, at or below
/// it category 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyClassifier {
    pub cut: f64,
}

impl ToyClassifier {
    /// Cut at the median channel-0 mean of `images`.
    pub fn calibrate(images: &[Image]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut means: Vec<f64> = images.iter().map(|im| im.channel_mean(0)).collect();
        means.sort_by(f64::total_cmp);
        let n = means.len();
        let cut = if n % 2 == 1 {
            means[n / 2]
        } else {
            0.5 * (means[n / 2 - 1] + means[n / 2])
        };
        Ok(Self { cut })
    }
}

impl Classifier for ToyClassifier {
    fn name(&self) -> &str {
        "toy-threshold"
    }

    fn categories(&self) -> usize {
        2
    }

    fn classify(&self, image: &Image) -> usize {
        usize::from(image.channel_mean(0) > self.cut)
    }
}

fn read_two_column_csv(path: &Path, second: &str) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(path, "empty CSV"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["sample_id", second] {
        return Err(Error::format(path, format!("expected header sample_id,{second}, got {header}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut parts = line.split(',').map(str::trim);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(v), None) if !id.is_empty() => Ok((id.to_string(), v.to_string())),
                _ => Err(Error::format(path, format!("line {}: expected two fields", i + 2))),
            }
        })
        .collect()
}

/// Reads a `sample_id,score` CSV.
pub fn read_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    read_two_column_csv(path, "score")?
        .into_iter()
        .map(|(id, v)| {
            v.parse::<f64>()
                .map(|s| (id.clone(), s))
                .map_err(|_| Error::format(path, format!("sample {id}: bad score {v:?}")))
        })
        .collect()
}

/// Reads a `sample_id,category` CSV.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, usize)>> {
    read_two_column_csv(path, "category")?
        .into_iter()
        .map(|(id, v)| {
            v.parse::<usize>()
                .map(|c| (id.clone(), c))
                .map_err(|_| Error::format(path, format!("sample {id}: bad category {v:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
    fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = a.to_vec();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[i * n + i]).collect(), v)
    }

    fn jacobi_sqrt(a: &[f64], n: usize) -> Vec<f64> {
        let (vals, v) = jacobi_eigen(a, n);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| v[i * n + k] * vals[k].max(0.0).sqrt() * v[j * n + k]).sum();
            }
        }
        out
    }

    fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
            }
        }
        out
    }

    /// Closed form with the same regularisation, via Jacobi rather than nalgebra.
    fn oracle_fid(m1: &[f64], c1: &[f64], m2: &[f64], c2: &[f64], n: usize) -> f64 {
        let reg = |c: &[f64]| -> Vec<f64> {
            let mut c = c.to_vec();
            for i in 0..n {
                c[i * n + i] += COVARIANCE_EPS;
            }
            c
        };
        let (s1, s2) = (reg(c1), reg(c2));
        let r = jacobi_sqrt(&s1, n);
        let inner = matmul(&matmul(&r, &s2, n), &r, n);
        let sym: Vec<f64> = (0..n * n).map(|k| 0.5 * (inner[k] + inner[(k % n) * n + k / n])).collect();
        let cross: f64 = (0..n).map(|i| jacobi_sqrt(&sym, n)[i * n + i]).sum();
        let shift: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
        let tr = |s: &[f64]| (0..n).map(|i| s[i * n + i]).sum::<f64>();
        shift + tr(&s1) + tr(&s2) - 2.0 * cross
    }

    fn random_spd(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
        let a = seeded_gaussian(rng, &[n, n]);
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = scale * (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() / n as f64;
            }
            c[i * n + i] += 0.5;
        }
        c
    }

    fn stats(mean: &[f64], cov: &[f64], n: usize) -> GaussianStats {
        GaussianStats {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::from_row_slice(n, n, cov),
        }
    }

    #[test]
    fn fd_examples() {
        let fd = |c: Vec<u64>| fairness_discrepancy(&CategoryDistribution::new(c).unwrap()).unwrap();
        assert_eq!(fd(vec![250, 250]), 0.0);
        assert!((fd(vec![255, 245]) - 1.414e-2).abs() < 1e-5);
        assert!((fd(vec![255, 245]) - 2f64.sqrt() * 0.01).abs() < 1e-12);
        assert!((fd(vec![500, 0]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            fairness_discrepancy(&CategoryDistribution::new(vec![0, 0]).unwrap()),
            Err(Error::EmptySample)
        ));
        assert!(CategoryDistribution::new(vec![3]).is_err());
        let d = CategoryDistribution::from_predictions(&[0, 1, 1, 2], 3).unwrap();
        assert_eq!(d.counts(), &[1, 2, 1]);
        assert!(CategoryDistribution::from_predictions(&[4], 3).is_err());
    }

    #[test]
    fn ta_examples() {
        let base = vec![1.0, 2.0, -1.0];
        assert!((text_alignment(&[base.clone(), base.clone()], &base).unwrap() - 1.0).abs() < 1e-12);
        assert!(text_alignment(&[vec![2.0, -1.0, 0.0]], &base).unwrap().abs() < 1e-12);
        let anti: Vec<f64> = base.iter().map(|x| -x).collect();
        assert!(text_alignment(&[base.clone(), anti], &base).unwrap().abs() < 1e-12);
        assert!(matches!(
            text_alignment(&[vec![0.0; 3]], &base),
            Err(Error::DegenerateFeature(_))
        ));
        assert!(matches!(text_alignment(&[vec![1.0]], &base), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fid_examples() {
        let one = |m: f64| GaussianStats {
            mean: DVector::from_vec(vec![m]),
            cov: DMatrix::from_vec(1, 1, vec![1.0]),
        };
        assert!((frechet_distance_from_stats(&one(0.0), &one(1.0)).unwrap() - 1.0).abs() < 1e-12);

        let mut rng = SeededRng::new(5, 5);
        let feats: Vec<Vec<f64>> = (0..40).map(|_| seeded_gaussian(&mut rng, &[4])).collect();
        assert!(frechet_distance(&feats, &feats).unwrap() < 1e-6);
        assert!(frechet_distance(&feats, &[vec![0.0; 3], vec![1.0; 3]]).is_err());
    }

    #[test]
    fn fid_matches_jacobi_oracle() {
        let mut rng = SeededRng::new(11, 0);
        for _ in 0..10 {
            let n = 6;
            let (m1, m2) = (seeded_gaussian(&mut rng, &[n]), seeded_gaussian(&mut rng, &[n]));
            let (c1, c2) = (random_spd(&mut rng, n, 1.0), random_spd(&mut rng, n, 2.0));
            let ours = frechet_distance_from_stats(&stats(&m1, &c1, n), &stats(&m2, &c2, n)).unwrap();
            let oracle = oracle_fid(&m1, &c1, &m2, &c2, n);
            assert!((ours - oracle).abs() < 1e-6, "{ours} vs {oracle}");
            let swapped = frechet_distance_from_stats(&stats(&m2, &c2, n), &stats(&m1, &c1, n)).unwrap();
            assert!((ours - swapped).abs() < 1e-8);
        }
    }

    #[test]
    fn ds_examples() {
        let r = vec![("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![0.0, 1.0])];
        let same = semantic_distance(&r, &r).unwrap();
        assert_eq!(same.mean, 0.0);
        let g = vec![("b".to_string(), vec![1.0, 0.0]), ("a".to_string(), vec![1.0, 0.0])];
        let d = semantic_distance(&r, &g).unwrap();
        assert_eq!(d.pairs[0], ("b".to_string(), 1.0));
        assert_eq!(d.pairs[1].1, 0.0);
        assert!(matches!(semantic_distance(&r, &g[..1]), Err(Error::MissingPair(_))));
        let scores = SemanticDistances::from_scores(vec![("x".into(), 0.2), ("y".into(), 0.4)]).unwrap();
        assert!((scores.mean - 0.3).abs() < 1e-15);
    }

    #[test]
    fn classifier_tie_and_median() {
        let im = |v: f64| Image {
            height: 1,
            width: 2,
            data: vec![v, v, 0.0, 0.0, 0.0, 0.0],
        };
        let clf = ToyClassifier::calibrate(&[im(1.0), im(3.0), im(2.0), im(4.0)]).unwrap();
        assert_eq!(clf.cut, 2.5);
        assert_eq!(clf.classify(&im(2.5)), 0);
        assert_eq!(clf.classify(&im(2.6)), 1);
        let images: Vec<Image> = (0..200).map(|i| im(i as f64 * 0.37 - 20.0)).collect();
        let clf = ToyClassifier::calibrate(&images).unwrap();
        let ones: usize = images.iter().map(|i| clf.classify(i)).sum();
        assert_eq!(ones, 100);
    }

    #[test]
    fn toy_features_are_unit_and_deterministic() {
        let p = ToyFeatureProvider::for_image(4, 4, 16, 3);
        let mut rng = SeededRng::new(1, 1);
        let img = Image {
            height: 4,
            width: 4,
            data: seeded_gaussian(&mut rng, &[48]),
        };
        let f = p.features(&img).unwrap();
        assert_eq!(f.len(), 16);
        assert!((norm(&f) - 1.0).abs() < 1e-12);
        assert_eq!(f, ToyFeatureProvider::for_image(4, 4, 16, 3).features(&img).unwrap());
    }

    #[test]
    fn csv_readers() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("ds.csv");
        fs::write(&s, "sample_id,score\ns0,0.2\ns1,0.4\n").unwrap();
        assert_eq!(read_scores(&s).unwrap(), vec![("s0".into(), 0.2), ("s1".into(), 0.4)]);
        let p = dir.path().join("pred.csv");
        fs::write(&p, "sample_id,category\ns0,1\n").unwrap();
        assert_eq!(read_predictions(&p).unwrap(), vec![("s0".into(), 1)]);
        fs::write(&p, "id,category\ns0,1\n").unwrap();
        assert!(read_predictions(&p).unwrap_err().to_string().contains("pred.csv"));
    }

    proptest! {
        #[test]
        fn fd_bounded_and_permutation_invariant(counts in proptest::collection::vec(0u64..50, 2..10)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let k = counts.len() as f64;
            let fd = fairness_discrepancy(&CategoryDistribution::new(counts.clone()).unwrap()).unwrap();
            prop_assert!(fd <= ((k - 1.0) / k).sqrt() + 1e-12);
            let mut rev = counts;
            rev.reverse();
            prop_assert_eq!(fd, fairness_discrepancy(&CategoryDistribution::new(rev).unwrap()).unwrap());
        }

        #[test]
        fn ta_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = SeededRng::new(seed, 3);
            let feats: Vec<Vec<f64>> = (0..5).map(|_| seeded_gaussian(&mut rng, &[4])).collect();
            let base = seeded_gaussian(&mut rng, &[4]);
            let scaled: Vec<Vec<f64>> = feats.iter().map(|f| f.iter().map(|x| x * scale).collect()).collect();
            let a = text_alignment(&feats, &base).unwrap();
            let b = text_alignment(&scaled, &base).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ds_symmetric(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed, 4);
            let a = vec![("s".to_string(), seeded_gaussian(&mut rng, &[5]))];
            let b = vec![("s".to_string(), seeded_gaussian(&mut rng, &[5]))];
            prop_assert_eq!(semantic_distance(&a, &b).unwrap().mean, semantic_distance(&b, &a).unwrap().mean);
            prop_assert_eq!(semantic_distance(&a, &a).unwrap().mean, 0.0);
        }
    }
}
