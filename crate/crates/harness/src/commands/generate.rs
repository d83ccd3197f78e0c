use std::path::Path;

use fairqueue_core::prompt::{format as fqem, EmbeddingMatrix};
use serde_json::json;

use super::{csv, ensure_dir, write_text};
use crate::config::ExperimentConfig;
use crate::dump;
use crate::error::Result;
use crate::manifest::RunManifest;
use crate::run::{generate, Context, Sample};
use crate::spec::ScheduleSpec;

pub const IMAGES_FILE: &str = "images.fqem";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const ATTENTION_DIR: &str = "attention";
pub const SAMPLES_HEADER: &str = "sample_id,seed,category,planted_mean,expression";

/// Decoded images as an FQEM matrix: one row per sample, labelled by sample
/// id, with the requested categories in the manifest.
pub fn images_matrix(samples: &[Sample]) -> fairqueue_core::Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.image.data.clone()).collect();
    EmbeddingMatrix::from_rows(&rows)?.with_labels(samples.iter().map(Sample::id).collect())
}

pub fn run(config: &ExperimentConfig, schedule: &ScheduleSpec, seeds: &[u64], dump_attention: bool, out: &Path) -> Result<RunManifest> {
    let ctx = Context::new(config.clone())?;
    let mut manifest = RunManifest::new(
        "generate",
        config,
        Some(schedule),
        seeds.to_vec(),
        json!({ "dump_attention": dump_attention }),
    );
    let samples = generate(&ctx, schedule, seeds, dump_attention)?;
    ensure_dir(out)?;

    let categories: Vec<usize> = samples.iter().map(|s| s.category).collect();
    fqem::write(&out.join(IMAGES_FILE), &images_matrix(&samples)?, Some(&categories))?;
    manifest.outputs.push(IMAGES_FILE.into());

    let planted = config.denoiser.planted_channel;
    let table = csv(
        SAMPLES_HEADER,
        samples.iter().map(|s| {
            format!(
                "{},{},{},{},{}",
                s.id(),
                s.seed,
                s.category,
                s.final_state.channel_mean(planted),
                ctx.expression(&s.final_state, s.category)
            )
        }),
    );
    write_text(&out.join(SAMPLES_FILE), &table)?;
    manifest.outputs.push(SAMPLES_FILE.into());

    if dump_attention {
        let dir = out.join(ATTENTION_DIR);
        ensure_dir(&dir)?;
        for s in &samples {
            let name = format!("{ATTENTION_DIR}/{}.fqat", s.id());
            dump::write(&out.join(&name), s.records.as_deref().unwrap_or_default())?;
            manifest.outputs.push(name);
        }
    }
    manifest.write(out)?;
    Ok(manifest)
}

/// Regenerates a previous run from its manifest into `out`.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let m = RunManifest::read(manifest_path)?;
    let schedule = m.schedule.clone().unwrap_or_default();
    let dump_attention = m.params.get("dump_attention").and_then(|v| v.as_bool()).unwrap_or(false);
    run(&m.config, &schedule, &m.seeds, dump_attention, out)
}
