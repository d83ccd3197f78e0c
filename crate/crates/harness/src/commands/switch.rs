use std::path::Path;

use fairqueue_core::forensics::{
    accumulate, central_moment, amplitude, AbnormalityReport, MapSource, MetricRow, AMPLITUDE, CENTRAL_MOMENT,
};
use fairqueue_core::prompt::{format as fqem, ComposedPrompt, EmbeddingMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ensure_dir, write_text};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::run::{generate, Context};
use crate::spec::{ScheduleSpec, SpecKind};

pub const MAPS_FILE: &str = "maps.fqem";
pub const REPORT_FILE: &str = "abnormality.csv";

pub fn histogram_file(stage: &str) -> String {
    format!("histograms_stage{stage}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SwitchMode {
    /// Learned prompt first, hard prompt after the switch.
    I2h,
    /// Hard prompt first, learned prompt after the switch.
    H2i,
}

/// One accumulated map: `(sample_id, stage, token_label, map)`.
pub type StageMap = (String, String, String, Vec<f64>);

pub struct SwitchRun {
    pub manifest: RunManifest,
    pub maps: Vec<StageMap>,
    pub report: AbnormalityReport,
}

fn stage_maps(
    sample_id: &str,
    records: &[fairqueue_core::denoiser::AttentionRecord],
    stage: &str,
    window: std::ops::Range<usize>,
    prompt: &ComposedPrompt,
    image: (usize, usize),
) -> fairqueue_core::Result<(Vec<StageMap>, Vec<MetricRow>)> {
    let labels = prompt.token_labels();
    let attribute = prompt.tsa_token_range();
    let mut maps = Vec::with_capacity(prompt.rows());
    let mut rows = Vec::with_capacity(prompt.rows());
    for (token, label) in labels.iter().enumerate() {
        let acc = accumulate(records, token, window.clone(), image.0, image.1, MapSource::Effective)?;
        let (metric_name, value) = if attribute.contains(&token) {
            (CENTRAL_MOMENT, central_moment(&acc.grid)?)
        } else {
            (AMPLITUDE, amplitude(&acc.grid))
        };
        rows.push(MetricRow {
            sample_id: sample_id.to_string(),
            token_label: label.clone(),
            stage: stage.to_string(),
            metric_name,
            value,
        });
        maps.push((sample_id.to_string(), stage.to_string(), label.clone(), acc.grid.into_values()));
    }
    Ok((maps, rows))
}

/// Runs the I2H or H2I switching study and writes per-stage accumulated
/// maps, the abnormality CSV and per-stage metric histograms.
pub fn run(config: &ExperimentConfig, mode: SwitchMode, n_switch: usize, seeds: &[u64], bins: usize, out: &Path) -> Result<SwitchRun> {
    let ctx = Context::new(config.clone())?;
    let steps = ctx.steps();
    if n_switch > steps {
        return Err(HarnessError::schema("n_switch", format!("{n_switch} exceeds the step count {steps}")));
    }
    let kind = match mode {
        SwitchMode::I2h => SpecKind::I2h,
        SwitchMode::H2i => SpecKind::H2i,
    };
    let spec = ScheduleSpec::switch(kind, n_switch);
    let samples = generate(&ctx, &spec, seeds, true)?;
    let image = (config.denoiser.image_height, config.denoiser.image_width);

    let per_sample = samples
        .par_iter()
        .map(|s| {
            let schedule = ctx.schedule_for(&spec, s.index)?;
            let records = s.records.as_deref().unwrap_or_default();
            let mut maps = Vec::new();
            let mut rows = Vec::new();
            let stages = [("1", 0..n_switch, schedule.first()), ("2", n_switch..steps, schedule.second().unwrap_or(schedule.first()))];
            for (stage, window, prompt) in stages {
                if window.is_empty() {
                    continue;
                }
                let (m, r) = stage_maps(&s.id(), records, stage, window, prompt, image)?;
                maps.extend(m);
                rows.extend(r);
            }
            Ok((maps, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let (maps, rows): (Vec<StageMap>, Vec<MetricRow>) = per_sample
        .into_iter()
        .fold((Vec::new(), Vec::new()), |(mut m, mut r), (a, b)| {
            m.extend(a);
            r.extend(b);
            (m, r)
        });

    ensure_dir(out)?;
    let mut manifest = RunManifest::new(
        "switch",
        config,
        Some(&spec),
        seeds.to_vec(),
        json!({ "mode": mode, "n_switch": n_switch, "bins": bins }),
    );

    let flat: Vec<Vec<f64>> = maps.iter().map(|m| m.3.clone()).collect();
    if !flat.is_empty() {
        let labels = maps.iter().map(|(id, st, tok, _)| format!("{id}/{st}/{tok}")).collect();
        let matrix = EmbeddingMatrix::from_rows(&flat)?.with_labels(labels)?;
        fqem::write(&out.join(MAPS_FILE), &matrix, None)?;
        manifest.outputs.push(MAPS_FILE.into());
    }

    for stage in ["1", "2"] {
        let stage_rows: Vec<MetricRow> = rows.iter().filter(|r| r.stage == stage).cloned().collect();
        if stage_rows.is_empty() {
            continue;
        }
        let hist = AbnormalityReport::from_rows(stage_rows, bins)?.histograms;
        let name = histogram_file(stage);
        write_text(&out.join(&name), &(serde_json::to_string_pretty(&hist).expect("serialises") + "\n"))?;
        manifest.outputs.push(name);
    }
    let report = AbnormalityReport::from_rows(rows, bins)?;
    write_text(&out.join(REPORT_FILE), &report.to_csv())?;
    manifest.outputs.push(REPORT_FILE.into());
    manifest.write(out)?;
    Ok(SwitchRun { manifest, maps, report })
}
