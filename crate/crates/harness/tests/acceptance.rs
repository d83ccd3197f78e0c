//! The twelve acceptance criteria, each at its stated tolerance. Every
//! criterion prints one PASS/FAIL line; the test fails if any of them did.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fairqueue::bank::PromptBank;
use fairqueue::commands::learn::realizable_refs;
use fairqueue::config::ExperimentConfig;
use fairqueue::dump;
use fairqueue::run::{generate, Context};
use fairqueue::spec::ScheduleSpec;
use fairqueue_core::denoiser::{run_trajectory, AttentionRecord, DenoiserConfig, LayerMaps, ToyDenoiser};
use fairqueue_core::eval::{
    fairness_discrepancy, frechet_distance, frechet_distance_from_stats, CategoryDistribution, Classifier,
    GaussianStats, COVARIANCE_EPS,
};
use fairqueue_core::forensics::{
    accumulate, accumulate_stage, amplitude, central_moment, synthetic, MapSource,
};
use fairqueue_core::numerics::{Grid2D, SeededRng};
use fairqueue_core::prompt::{
    directional_loss, format as fqem, learn_tokens, DirectionalObjective, EmbeddingMatrix, LearnConfig,
    ReferenceSet, ToyPromptEncoder,
};
use fairqueue_core::schedule::{transition_step, PromptSchedule};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {:.1?}, limit {:.0?}", took, limit);
    Ok(format!("{took:.1?}"))
}

fn bank() -> PromptBank {
    PromptBank::from_config(&ExperimentConfig::default()).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_grid(r: &mut ChaCha8Rng, h: usize, w: usize) -> Grid2D {
    Grid2D::new(h, w, (0..h * w).map(|_| r.random::<f64>()).collect()).unwrap()
}

// 1
fn degenerate_schedules() -> Check {
    let start = Instant::now();
    let den = ToyDenoiser::new(DenoiserConfig::default()).unwrap();
    let l = 50;
    let b = bank();
    let mut checked = 0;
    for seed in 0..10u64 {
        let k = (seed % 2) as usize;
        let (t, p, f) = (b.base().clone(), b.learned(k).unwrap().clone(), b.hard(k).unwrap().clone());
        let pairs = [
            ("FairQueue(l)", PromptSchedule::fair_queue(t.clone(), p.clone(), l, 10.0, l), PromptSchedule::constant(t.clone(), l)),
            ("FairQueue(0, c=1)", PromptSchedule::fair_queue(t.clone(), p.clone(), 0, 1.0, l), PromptSchedule::constant(p.clone(), l)),
            ("I2H(0)", PromptSchedule::i2h(p.clone(), f.clone(), 0, l), PromptSchedule::constant(f.clone(), l)),
            ("H2I(0)", PromptSchedule::h2i(f.clone(), p.clone(), 0, l), PromptSchedule::constant(p.clone(), l)),
        ];
        for (name, a, c) in pairs {
            let a = run_trajectory(&den, seed, &a.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let c = run_trajectory(&den, seed, &c.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure!(a == c, "{name} differs from its constant schedule at seed {seed}");
            checked += 1;
        }
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!("{checked} trajectory pairs identical, {t}"))
}

// 2
fn attention_normalization() -> Check {
    let den = ToyDenoiser::new(DenoiserConfig::default()).unwrap();
    let ctx_bank = bank();
    let worst = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let k = (seed % 2) as usize;
            let s = PromptSchedule::fair_queue(ctx_bank.base().clone(), ctx_bank.learned(k).unwrap().clone(), 10, 10.0, 50).unwrap();
            let traj = run_trajectory(&den, seed, &s).unwrap();
            let mut worst: f64 = 0.0;
            for rec in &traj.records {
                for layer in &rec.layers {
                    let n = layer.cells();
                    for cell in 0..n {
                        let sum: f64 = (0..rec.token_count).map(|t| layer.raw[t * n + cell]).sum();
                        worst = worst.max((sum - 1.0).abs());
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    ensure!(worst <= 1e-6, "max |sum - 1| = {worst:e}");
    Ok(format!("max |sum - 1| = {worst:.1e} over 100 trajectories"))
}

fn naive_moment(g: &Grid2D) -> f64 {
    let (h, w) = (g.height(), g.width());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            total += g.get(y, x);
        }
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            cx += x as f64 * g.get(y, x) / total;
            cy += y as f64 * g.get(y, x) / total;
        }
    }
    let mut mu = 0.0;
    for y in 0..h {
        for x in 0..w {
            mu += ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) * g.get(y, x) / total;
        }
    }
    mu
}

// 3
fn central_moment_oracle() -> Check {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = if i % 2 == 0 { 8 } else { 16 };
        let g = random_grid(&mut r, n, n);
        let want = naive_moment(&g);
        let got = central_moment(&g).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs() / want.abs());
    }
    ensure!(worst <= 1e-10, "max relative error {worst:e}");
    let uniform = central_moment(&Grid2D::filled(3, 3, 1.0).unwrap()).unwrap();
    ensure!((uniform - 4.0 / 3.0).abs() <= 1e-12, "uniform 3x3 gave {uniform}");
    Ok(format!("max relative error {worst:.1e}; uniform 3x3 = {uniform}"))
}

// 4
fn amplitude_oracle() -> Check {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (h, w) = (4 + i % 13, 3 + i % 7);
        let g = random_grid(&mut r, h, w);
        let mut brute = 0.0;
        for y in 0..h {
            for x in 0..w {
                brute += g.get(y, x);
            }
        }
        brute /= (h * w) as f64;
        worst = worst.max((amplitude(&g) - brute).abs());
        let mut perm = g.values().to_vec();
        for j in (1..perm.len()).rev() {
            perm.swap(j, r.random_range(0..=j));
        }
        let p = Grid2D::new(h, w, perm).unwrap();
        ensure!(amplitude(&p) == amplitude(&g), "permutation changed the amplitude of map {i}");
    }
    ensure!(worst <= 1e-12, "max abs error {worst:e}");
    Ok(format!("max abs error {worst:.1e}; permutations exact"))
}

// 5
fn window_additivity() -> Check {
    let den = ToyDenoiser::new(DenoiserConfig::default()).unwrap();
    let b = bank();
    let worst = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let k = (seed % 2) as usize;
            let s = PromptSchedule::fair_queue(b.base().clone(), b.learned(k).unwrap().clone(), 10, 10.0, 50).unwrap();
            let recs = run_trajectory(&den, seed, &s).unwrap().records;
            let mut worst: f64 = 0.0;
            for token in [0, 5, 6, 7] {
                for source in [MapSource::Raw, MapSource::Effective] {
                    let full = accumulate(&recs, token, 0..50, 32, 32, source).unwrap();
                    for n in [0, 10, 25, 50] {
                        let a = accumulate_stage(&recs, token, 0..n, 32, 32, source).unwrap();
                        let c = accumulate_stage(&recs, token, n..50, 32, 32, source).unwrap();
                        for ((x, y), f) in a.grid.values().iter().zip(c.grid.values()).zip(full.grid.values()) {
                            worst = worst.max((x + y - f).abs());
                        }
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e} over 20 seeds"))
}

fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, dim: usize, scale: f64) -> EmbeddingMatrix {
    let data = (0..rows * dim).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
    EmbeddingMatrix::new(rows, dim, data).unwrap()
}

/// The canonical realizable instance: the default synthetic base prompt,
/// the default encoder and paired references around two encodable targets.
fn realizable_instance(seed: u64) -> (EmbeddingMatrix, ToyPromptEncoder, ReferenceSet) {
    let cfg = ExperimentConfig::default();
    let base = bank().base().base().clone();
    let enc = ToyPromptEncoder::new(base.dim(), 16, cfg.learn.encoder_seed);
    let (feats, cats) = realizable_refs(&base, &enc, 2, 3, 10, seed).unwrap();
    let refs = ReferenceSet::from_labelled(&feats, &cats).unwrap();
    (base, enc, refs)
}

// 6
fn prompt_learner() -> Check {
    let start = Instant::now();
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (p, d, out, k, q) = (5, 8, 6, 3, 3);
        let base = gaussian_matrix(&mut r, p, d, 1.0);
        let enc = ToyPromptEncoder::new(d, out, r.random());
        let refs = ReferenceSet::new((0..k).map(|_| gaussian_matrix(&mut r, 12, out, 1.0)).collect()).unwrap();
        let obj = DirectionalObjective::new(&base, &refs, &enc).map_err(|e| e.to_string())?;
        let tokens: Vec<EmbeddingMatrix> = (0..k).map(|_| gaussian_matrix(&mut r, q, d, 0.5)).collect();
        let (_, grads) = obj.loss_and_grad(&tokens).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut numeric = Vec::new();
        for c in 0..k {
            for i in 0..q * d {
                let shifted = |delta: f64| {
                    let mut t = tokens.clone();
                    let mut data = t[c].data().to_vec();
                    data[i] += delta;
                    t[c] = EmbeddingMatrix::new(q, d, data).unwrap();
                    obj.loss(&t).unwrap()
                };
                numeric.push((shifted(h) - shifted(-h)) / (2.0 * h));
            }
        }
        let analytic: Vec<f64> = grads.concat();
        let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale));
        }
    }
    ensure!(worst < 1e-4, "gradient max relative error {worst:e}");

    let (base, enc, refs) = realizable_instance(0);
    let out = learn_tokens(&base, &refs, &enc, &LearnConfig::default()).map_err(|e| e.to_string())?;
    let last = *out.trace.last().unwrap();
    ensure!(last < 1e-3, "final loss {last:e} after {} iterations", out.trace.len() - 1);
    ensure!(out.trace.len() <= 2001, "ran {} iterations", out.trace.len() - 1);
    if let Some(i) = out.trace.windows(2).position(|w| w[1] > w[0]) {
        return Err(format!("trace rises at iteration {}: {:e} -> {:e}", i + 1, out.trace[i], out.trace[i + 1]));
    }
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "grad rel err {worst:.1e}; realizable loss {last:.1e} after {} iters, trace monotone; {t}",
        out.trace.len() - 1
    ))
}

// 7
fn directional_identities() -> Check {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let u: Vec<f64> = (0..9).map(|_| r.sample(StandardNormal)).collect();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        // Gram-Schmidt gives an orthogonal partner.
        let v0: Vec<f64> = (0..9).map(|_| r.sample(StandardNormal)).collect();
        let proj = v0.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / u.iter().map(|x| x * x).sum::<f64>();
        let v: Vec<f64> = v0.iter().zip(&u).map(|(a, b)| a - proj * b).collect();
        let s: f64 = r.random_range(0.01..100.0);
        let scaled: Vec<f64> = v0.iter().map(|x| x * s).collect();
        let l = |a: &[f64], b: &[f64]| directional_loss(a, b).unwrap();
        worst = worst
            .max(l(&u, &u).abs())
            .max((l(&u, &neg) - 2.0).abs())
            .max((l(&u, &v) - 1.0).abs())
            .max((l(&u, &scaled) - l(&u, &v0)).abs())
            .max((l(&scaled, &u) - l(&v0, &u)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e}"))
}

// 8
fn fairness_discrepancy_checks() -> Check {
    let fd = |c: Vec<u64>| fairness_discrepancy(&CategoryDistribution::new(c).unwrap()).unwrap();
    ensure!(fd(vec![250, 250]) == 0.0, "uniform K=2 not 0");
    ensure!(fd(vec![7; 9]) == 0.0, "uniform K=9 not 0");
    // The quoted 1.414e-2 is sqrt(0.01^2 + 0.01^2) rounded to four digits;
    // the rounding alone is 2.1e-6, so the check is against the exact value.
    let v = fd(vec![255, 245]);
    let exact = (2.0f64 * 0.01 * 0.01).sqrt();
    ensure!((v - exact).abs() <= 1e-6, "[255,245] gave {v}, expected {exact}");
    let mut r = rng(8);
    let mut closest = f64::INFINITY;
    for i in 0..10_000 {
        let k = 2 + i % 8;
        let mut counts: Vec<u64> = (0..k).map(|_| r.random_range(0..40)).collect();
        if i % 50 == 0 {
            counts = vec![0; k];
            counts[i % k] = 1 + r.random_range(0..500);
        }
        if counts.iter().sum::<u64>() == 0 {
            counts[0] = 1;
        }
        let bound = ((k - 1) as f64 / k as f64).sqrt();
        let got = fd(counts.clone());
        ensure!(got <= bound, "{counts:?}: {got} exceeds {bound}");
        closest = closest.min(bound - got);
    }
    Ok(format!("[255,245] -> {v:.9e} (|v - 1.414e-2| = {:.1e}); bound held on 10^4 vectors (min slack {closest:.1e})", (v - 1.414e-2).abs()))
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                let pivot_row = m[col].clone();
                m[row].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Denman-Beavers iteration for the principal square root of a matrix with
/// positive real spectrum (here the nonsymmetric product `S1 S2`).
fn sqrtm(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut y = a.to_vec();
    let mut z: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..100 {
        let (yi, zi) = (invert(&y), invert(&z));
        let ny: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (y[i][j] + zi[i][j])).collect()).collect();
        let nz: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (z[i][j] + yi[i][j])).collect()).collect();
        let change: f64 = ny.iter().flatten().zip(y.iter().flatten()).map(|(a, b)| (a - b).abs()).sum();
        y = ny;
        z = nz;
        if change < 1e-15 {
            break;
        }
    }
    y
}

fn oracle_fid(m1: &[f64], s1: &[Vec<f64>], m2: &[f64], s2: &[Vec<f64>]) -> f64 {
    let n = m1.len();
    let reg = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        s.iter()
            .enumerate()
            .map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + if i == j { COVARIANCE_EPS } else { 0.0 }).collect())
            .collect()
    };
    let (a, b) = (reg(s1), reg(s2));
    let root = sqrtm(&matmul(&a, &b));
    let shift: f64 = m1.iter().zip(m2).map(|(x, y)| (x - y).powi(2)).sum();
    shift + (0..n).map(|i| a[i][i] + b[i][i] - 2.0 * root[i][i]).sum::<f64>()
}

fn random_spd(r: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let g: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| g[i][k] * g[j][k]).sum::<f64>() / (3 * d) as f64 + if i == j { 0.3 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (a[i][i] - s).sqrt() } else { (a[i][j] - s) / l[j][j] };
        }
    }
    l
}

fn sample_gaussian(r: &mut ChaCha8Rng, mean: &[f64], cov: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let l = cholesky(cov);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..mean.len()).map(|_| r.sample(StandardNormal)).collect();
            (0..mean.len()).map(|i| mean[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>()).collect()
        })
        .collect()
}

fn stats(mean: &[f64], cov: &[Vec<f64>]) -> GaussianStats {
    let d = mean.len();
    GaussianStats {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_fn(d, d, |i, j| cov[i][j]),
    }
}

// 9
fn frechet_checks() -> Check {
    let mut r = rng(9);
    let d = 6;
    let mut worst_closed: f64 = 0.0;
    let mut worst_sampled: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    for trial in 0..5 {
        let m1: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let m2: Vec<f64> = m1.iter().map(|m| m + 0.3 * r.sample::<f64, _>(StandardNormal)).collect();
        let (s1, s2) = (random_spd(&mut r, d), random_spd(&mut r, d));
        let truth = oracle_fid(&m1, &s1, &m2, &s2);
        let closed = frechet_distance_from_stats(&stats(&m1, &s1), &stats(&m2, &s2)).map_err(|e| e.to_string())?;
        worst_closed = worst_closed.max((closed - truth).abs());
        if trial > 0 {
            continue;
        }
        // Sampled statistics on the first pair only: at N=5000 the estimator
        // spread is a few hundredths for unit-scale covariances.
        let a = sample_gaussian(&mut r, &m1, &s1, 5000);
        let b = sample_gaussian(&mut r, &m2, &s2, 5000);
        let ab = frechet_distance(&a, &b).map_err(|e| e.to_string())?;
        let ba = frechet_distance(&b, &a).map_err(|e| e.to_string())?;
        worst_sampled = (ab - truth).abs();
        worst_sym = (ab - ba).abs();
        worst_self = frechet_distance(&a, &a).map_err(|e| e.to_string())?;
    }
    ensure!(worst_self < 1e-6, "identical sets gave {worst_self:e}");
    ensure!(worst_sym <= 1e-8, "asymmetry {worst_sym:e}");
    ensure!(worst_closed <= 1e-6, "closed form off by {worst_closed:e}");
    ensure!(worst_sampled <= 0.05, "sampled vs population off by {worst_sampled}");
    Ok(format!(
        "self {worst_self:.1e}, asym {worst_sym:.1e}, closed form {worst_closed:.1e}, sampled {worst_sampled:.3}"
    ))
}

// 10
fn ablation_trend() -> Check {
    let start = Instant::now();
    let ctx = Context::new(ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..500).collect();
    let n02 = transition_step(0.2, ctx.steps());
    let n06 = transition_step(0.6, ctx.steps());
    let classifier = ctx.calibrate_classifier().map_err(|e| e.to_string())?;
    let cs = [0.0, 1.0, 2.0, 5.0, 10.0, 12.0];
    let mut per_c: Vec<Vec<f64>> = Vec::new();
    let mut fd_at = Vec::new();
    for &c in &cs {
        let samples = generate(&ctx, &ScheduleSpec::fair_queue(Some(n02), Some(c)), &seeds, false).map_err(|e| e.to_string())?;
        per_c.push(samples.iter().map(|s| ctx.expression(&s.final_state, s.category)).collect());
        let preds: Vec<usize> = samples.iter().map(|s| classifier.classify(&s.image)).collect();
        fd_at.push(fairness_discrepancy(&CategoryDistribution::from_predictions(&preds, 2).unwrap()).unwrap());
    }
    for w in 0..cs.len() - 1 {
        for (i, (lo, hi)) in per_c[w].iter().zip(&per_c[w + 1]).enumerate() {
            ensure!(hi >= lo, "seed {i}: expression {hi} at c={} below {lo} at c={}", cs[w + 1], cs[w]);
        }
    }
    let (fd0, fd10) = (fd_at[0], fd_at[4]);
    ensure!(fd10 <= fd0, "FD at c=10 ({fd10}) exceeds FD at c=0 ({fd0})");
    let late = generate(&ctx, &ScheduleSpec::fair_queue(Some(n06), Some(10.0)), &seeds, false).map_err(|e| e.to_string())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let early_mean = mean(&per_c[4]);
    let late_mean = mean(&late.iter().map(|s| ctx.expression(&s.final_state, s.category)).collect::<Vec<_>>());
    ensure!(late_mean < early_mean, "mean expression {late_mean} at 0.6l not below {early_mean} at 0.2l");
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "expression monotone in c on 500 seeds; FD {fd0:.3} (c=0) -> {fd10:.3} (c=10); mean expression {early_mean:.4} (0.2l) > {late_mean:.4} (0.6l); {t}"
    ))
}

// 11
fn abnormality_separation() -> Check {
    let mut r = SeededRng::new(11, 0);
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    let scattered = median((0..500).map(|_| central_moment(&synthetic::scattered_map(&mut r, 16, 16)).unwrap()).collect());
    let concentrated = median((0..500).map(|_| central_moment(&synthetic::concentrated_map(&mut r, 16, 16)).unwrap()).collect());
    let ratio = scattered / concentrated;
    ensure!(ratio >= 2.0, "median ratio {ratio:.2}");
    Ok(format!("median central moment {scattered:.2} vs {concentrated:.2} (ratio {ratio:.1})"))
}

fn fairqueue_cmd(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fairqueue"))
        .args(args)
        .env("FQ_THREADS", "2")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "`fairqueue {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn same_bytes(a: &Path, b: &Path) -> Result<bool, String> {
    Ok(std::fs::read(a).map_err(|e| e.to_string())? == std::fs::read(b).map_err(|e| e.to_string())?)
}

// 12
fn io_and_end_to_end() -> Check {
    let mut r = rng(12);
    for trial in 0..50 {
        let steps = trial % 4;
        let tokens = 1 + r.random_range(0..6);
        let shapes: Vec<(usize, usize)> = (0..1 + r.random_range(0..3)).map(|_| (1 + r.random_range(0..6), 1 + r.random_range(0..6))).collect();
        let records: Vec<AttentionRecord> = (0..steps)
            .map(|step| AttentionRecord {
                step,
                token_count: tokens,
                layers: shapes
                    .iter()
                    .enumerate()
                    .map(|(layer_id, &(height, width))| LayerMaps {
                        layer_id,
                        height,
                        width,
                        raw: (0..tokens * height * width).map(|_| f64::from(r.random::<f32>())).collect(),
                        amplified: None,
                    })
                    .collect(),
            })
            .collect();
        let back = dump::decode(&dump::encode(&records).unwrap(), Path::new("mem")).map_err(|e| e.to_string())?;
        ensure!(back == records, "FQAT round trip changed trial {trial}");

        let (rows, dim) = (1 + r.random_range(0..5), 1 + r.random_range(0..9));
        let m = EmbeddingMatrix::new(rows, dim, (0..rows * dim).map(|_| f64::from(r.random::<f32>() - 0.5)).collect()).unwrap();
        let back = fqem::decode(&fqem::encode(&m), Path::new("mem")).map_err(|e| e.to_string())?;
        let same = back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same && back.rows() == rows, "FQEM round trip changed trial {trial}");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    // Reference defaults: l=50, c=10, n_switch=10, q=3.
    let base = bank().base().base().clone();
    let enc = ToyPromptEncoder::new(16, 16, 0);
    let (feats, cats) = realizable_refs(&base, &enc, 2, 3, 10, 0).unwrap();
    fqem::write(&d.join("refs.fqem"), &feats, Some(&cats)).map_err(|e| e.to_string())?;
    std::fs::write(
        d.join("defaults.json"),
        r#"{
  "denoiser": {"steps": 50},
  "prompts": {"q": 3},
  "schedule": {"kind": "fair_queue", "n_switch": 10, "c": 10.0},
  "learn": {"refs": "refs.fqem", "optimizer": {"lr": 0.01, "iters": 2000}}
}
"#,
    )
    .map_err(|e| e.to_string())?;
    let cfg = d.join("defaults.json");
    let cfg = cfg.to_str().unwrap();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let loaded = ExperimentConfig::load(&d.join("defaults.json")).map_err(|e| e.to_string())?;
    ensure!(
        loaded.denoiser.steps == 50 && loaded.schedule.c == Some(10.0) && loaded.schedule.n_switch == Some(10) && loaded.prompts.q == 3,
        "default config did not load as written"
    );

    fairqueue_cmd(&["--config", cfg, "learn-tokens", "--out", &p("learn")])?;
    fairqueue_cmd(&["--config", cfg, "generate", "--seeds", "20", "--dump-attention", "--out", &p("gen")])?;
    fairqueue_cmd(&["generate", "--manifest", &p("gen/manifest.json"), "--out", &p("again")])?;
    for f in ["images.fqem", "samples.csv", "attention/seed0.fqat", "attention/seed19.fqat"] {
        ensure!(same_bytes(&d.join("gen").join(f), &d.join("again").join(f))?, "rerun changed {f}");
    }
    fairqueue_cmd(&["--config", cfg, "generate", "--seeds", "20", "--schedule", r#"{"kind":"constant","prompt_refs":["base"]}"#, "--out", &p("ref")])?;
    let metrics = fairqueue_cmd(&[
        "--config", cfg, "evaluate", "--generated", &p("gen"), "--reference", &p("ref"), "--classifier", "toy", "--out", &p("eval"),
    ])?;
    let m: serde_json::Value = serde_json::from_str(&metrics).map_err(|e| e.to_string())?;
    ensure!(["FD", "TA", "FID", "DS"].iter().all(|k| m[k].is_f64()), "evaluate printed {metrics}");
    fairqueue_cmd(&["--config", cfg, "switch", "--mode", "i2h", "--n-switch", "10", "--seeds", "4", "--out", &p("switch")])?;
    fairqueue_cmd(&["--config", cfg, "dump-attn", &p("gen/attention/seed3.fqat")])?;
    Ok(format!("50 FQAT/FQEM round trips exact; rerun bit-identical; reference defaults ran end to end (FD {})", m["FD"]))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("degenerate schedule equivalences", degenerate_schedules),
        ("cross-attention normalization", attention_normalization),
        ("central moment oracle", central_moment_oracle),
        ("amplitude oracle", amplitude_oracle),
        ("window additivity", window_additivity),
        ("prompt learner", prompt_learner),
        ("directional-loss identities", directional_identities),
        ("fairness discrepancy", fairness_discrepancy_checks),
        ("frechet distance", frechet_checks),
        ("toy ablation trend", ablation_trend),
        ("abnormality separation", abnormality_separation),
        ("I/O and end to end", io_and_end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn learner_trace_shape_across_instances() {
    // Informational: how often Adam's trace is monotone on other realizable
    // instances. Only convergence is required of them.
    let mut monotone = 0;
    for seed in 0..10 {
        let (base, enc, refs) = realizable_instance(seed);
        let out = learn_tokens(&base, &refs, &enc, &LearnConfig::default()).unwrap();
        assert!(*out.trace.last().unwrap() < 1e-3, "instance {seed} did not converge");
        monotone += usize::from(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }
    println!("monotone learner traces: {monotone}/10 realizable instances");
}
