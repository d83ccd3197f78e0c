use std::path::Path;

use fairqueue_core::eval::{fairness_discrepancy, text_alignment, CategoryDistribution, Classifier};
use fairqueue_core::schedule::transition_step;
use serde_json::json;

use super::{csv, ensure_dir, write_text};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::run::{generate, Context};
use crate::spec::ScheduleSpec;

pub const RESULTS_FILE: &str = "ablation.csv";
pub const RESULTS_HEADER: &str = "c,n_switch,fd,ta_proxy,planted_expression_mean";

/// The full ablation grid: `c` in 0..=12 and transitions at 0, 0.1l, 0.2l, 0.3l.
pub fn default_grid() -> (Vec<f64>, Vec<f64>) {
    ((0..=12).map(f64::from).collect(), vec![0.0, 0.1, 0.2, 0.3])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub c: f64,
    pub fraction: f64,
    pub n_switch: usize,
    pub fd: f64,
    pub ta_proxy: f64,
    pub expression_mean: f64,
    /// Per-seed planted expression, in seed order.
    pub expressions: Vec<f64>,
}

/// `(c, n_switch)` points of the grid in order, duplicates dropped.
pub fn grid_points(c_values: &[f64], fractions: &[f64], steps: usize) -> Result<Vec<(f64, f64, usize)>> {
    if c_values.is_empty() || fractions.is_empty() {
        return Err(HarnessError::Config("ablation grids must be nonempty".into()));
    }
    if let Some(c) = c_values.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(HarnessError::schema("c", format!("amplification {c} must be finite and >= 0")));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(HarnessError::schema("fractions", format!("transition fraction {f} outside [0, 1]")));
    }
    let mut points: Vec<(f64, f64, usize)> = Vec::new();
    for &c in c_values {
        for &f in fractions {
            let n = transition_step(f, steps);
            if !points.iter().any(|p| p.0 == c && p.2 == n) {
                points.push((c, f, n));
            }
        }
    }
    Ok(points)
}

/// Prompt queuing over the grid. FD uses the calibrated toy classifier;
/// the TA proxy is the mean cosine of image features to the centroid of
/// Constant(T) features on the same seeds.
pub fn study(ctx: &Context, c_values: &[f64], fractions: &[f64], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let points = grid_points(c_values, fractions, ctx.steps())?;
    let classifier = ctx.calibrate_classifier()?;
    let reference = generate(ctx, &ScheduleSpec::constant("base"), seeds, false)?;
    let ref_feats = ctx.features(&reference.iter().map(|s| &s.image).collect::<Vec<_>>())?;
    let dim = ctx.config.eval.feature_dim;
    let mut centroid = vec![0.0; dim];
    for f in &ref_feats {
        centroid.iter_mut().zip(f).for_each(|(c, v)| *c += v / ref_feats.len() as f64);
    }

    points
        .into_iter()
        .map(|(c, fraction, n_switch)| {
            let spec = ScheduleSpec::fair_queue(Some(n_switch), Some(c));
            let samples = generate(ctx, &spec, seeds, false)?;
            let predictions: Vec<usize> = samples.iter().map(|s| classifier.classify(&s.image)).collect();
            let fd = fairness_discrepancy(&CategoryDistribution::from_predictions(&predictions, ctx.bank.categories())?)?;
            let feats = ctx.features(&samples.iter().map(|s| &s.image).collect::<Vec<_>>())?;
            let ta_proxy = text_alignment(&feats, &centroid)?;
            let expressions: Vec<f64> = samples.iter().map(|s| ctx.expression(&s.final_state, s.category)).collect();
            let expression_mean = expressions.iter().sum::<f64>() / expressions.len() as f64;
            Ok(AblationRow {
                c,
                fraction,
                n_switch,
                fd,
                ta_proxy,
                expression_mean,
                expressions,
            })
        })
        .collect()
}

pub fn run(config: &ExperimentConfig, c_values: &[f64], fractions: &[f64], seeds: &[u64], out: &Path) -> Result<(RunManifest, Vec<AblationRow>)> {
    let ctx = Context::new(config.clone())?;
    let rows = study(&ctx, c_values, fractions, seeds)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new(
        "ablate",
        config,
        None,
        seeds.to_vec(),
        json!({ "c": c_values, "fractions": fractions }),
    );
    let table = csv(
        RESULTS_HEADER,
        rows.iter()
            .map(|r| format!("{},{},{},{},{}", r.c, r.n_switch, r.fd, r.ta_proxy, r.expression_mean)),
    );
    write_text(&out.join(RESULTS_FILE), &table)?;
    manifest.outputs.push(RESULTS_FILE.into());
    manifest.write(out)?;
    Ok((manifest, rows))
}
