use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairqueue_core::denoiser::Image;
use fairqueue_core::eval::{
    fairness_discrepancy, frechet_distance, read_predictions, read_scores, semantic_distance, text_alignment,
    CategoryDistribution, Classifier, SemanticDistances,
};
use fairqueue_core::numerics::cosine_similarity;
use fairqueue_core::prompt::{format as fqem, EmbeddingMatrix};
use serde::Serialize;
use serde_json::json;

use super::{csv, ensure_dir, generate::IMAGES_FILE, write_text};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::run::Context;

pub const METRICS_FILE: &str = "metrics.json";
pub const PER_SAMPLE_FILE: &str = "per_sample.csv";
pub const PER_SAMPLE_HEADER: &str = "sample_id,category,ta,ds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Rows are flattened decoded images; features come from the toy provider.
    Images,
    /// Rows are already feature vectors.
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ClassifierSpec {
    /// Calibrated channel-0 threshold. Needs image inputs.
    Toy,
    /// External `sample_id,category` predictions.
    Predictions(PathBuf),
}

impl ClassifierSpec {
    /// `toy` or a path to a predictions CSV.
    pub fn parse(arg: &str) -> Self {
        if arg == "toy" {
            Self::Toy
        } else {
            Self::Predictions(PathBuf::from(arg))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    /// FQEM file, or a run directory holding `images.fqem`.
    pub generated: PathBuf,
    pub reference: Option<PathBuf>,
    pub input: InputKind,
    pub classifier: Option<ClassifierSpec>,
    /// Single-row FQEM holding the base prompt embedding in feature space.
    /// Without it TA is taken against the reference feature centroid.
    pub ta_base: Option<PathBuf>,
    pub ds_scores: Option<PathBuf>,
    pub ta_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    #[serde(rename = "FD")]
    pub fd: Option<f64>,
    #[serde(rename = "TA")]
    pub ta: Option<f64>,
    #[serde(rename = "FID")]
    pub fid: Option<f64>,
    #[serde(rename = "DS")]
    pub ds: Option<f64>,
}

fn resolve_input(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(IMAGES_FILE)
    } else {
        path.to_path_buf()
    }
}

struct Loaded {
    ids: Vec<String>,
    images: Option<Vec<Image>>,
    features: Vec<Vec<f64>>,
}

fn load(ctx: &Context, path: &Path, kind: InputKind) -> Result<Loaded> {
    let path = resolve_input(path);
    let (m, _) = fqem::read(&path)?;
    let ids: Vec<String> = (0..m.rows()).map(|i| m.label_or(i, &format!("row{i}"))).collect();
    match kind {
        InputKind::Features => Ok(Loaded {
            ids,
            images: None,
            features: m.iter_rows().map(<[f64]>::to_vec).collect(),
        }),
        InputKind::Images => {
            let d = &ctx.config.denoiser;
            let expect = Image::CHANNELS * d.image_height * d.image_width;
            if m.dim() != expect {
                return Err(HarnessError::format(
                    &path,
                    format!("image rows have {} values, the configured decoder emits {expect}", m.dim()),
                ));
            }
            let images: Vec<Image> = m
                .iter_rows()
                .map(|r| Image {
                    height: d.image_height,
                    width: d.image_width,
                    data: r.to_vec(),
                })
                .collect();
            let features = ctx.features(&images.iter().collect::<Vec<_>>())?;
            Ok(Loaded {
                ids,
                images: Some(images),
                features,
            })
        }
    }
}

fn predictions(ctx: &Context, gen: &Loaded, spec: &ClassifierSpec) -> Result<Vec<usize>> {
    match spec {
        ClassifierSpec::Toy => {
            let images = gen.images.as_ref().ok_or_else(|| {
                HarnessError::Config("the toy classifier needs image inputs, not features".into())
            })?;
            let clf = ctx.calibrate_classifier()?;
            Ok(images.iter().map(|im| clf.classify(im)).collect())
        }
        ClassifierSpec::Predictions(path) => {
            let by_id: BTreeMap<String, usize> = read_predictions(path)?.into_iter().collect();
            gen.ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id)
                        .copied()
                        .ok_or_else(|| HarnessError::format(path, format!("no prediction for sample {id}")))
                })
                .collect()
        }
    }
}

/// Computes FD, TA, FID and DS and writes `metrics.json` plus a per-sample
/// CSV. Metrics whose inputs are absent are written as `null`.
pub fn run(config: &ExperimentConfig, args: &EvaluateArgs, out: &Path) -> Result<(RunManifest, Metrics)> {
    let classifier = args
        .classifier
        .as_ref()
        .ok_or_else(|| HarnessError::Config("evaluate needs a classifier: `toy` or a predictions CSV".into()))?;
    let ctx = Context::new(config.clone())?;
    let gen = load(&ctx, &args.generated, args.input)?;
    let reference = args.reference.as_deref().map(|p| load(&ctx, p, args.input)).transpose()?;

    let preds = predictions(&ctx, &gen, classifier)?;
    let fd = fairness_discrepancy(&CategoryDistribution::from_predictions(&preds, config.categories())?)?;

    let base: Option<Vec<f64>> = match (&args.ta_base, &reference) {
        (Some(path), _) => {
            let (m, _) = fqem::read(path)?;
            if m.rows() != 1 {
                return Err(HarnessError::format(path, "TA base must hold exactly one row"));
            }
            Some(m.row(0).to_vec())
        }
        (None, Some(r)) => {
            let mut c = vec![0.0; r.features.first().map_or(0, Vec::len)];
            for f in &r.features {
                c.iter_mut().zip(f).for_each(|(c, v)| *c += v / r.features.len() as f64);
            }
            Some(c)
        }
        (None, None) => None,
    };
    let (ta, ta_per): (Option<f64>, BTreeMap<String, f64>) = match (&args.ta_scores, &base) {
        (Some(path), _) => {
            let scores = SemanticDistances::from_scores(read_scores(path)?)?;
            (Some(scores.mean), scores.pairs.into_iter().collect())
        }
        (None, Some(b)) => {
            let per = gen
                .ids
                .iter()
                .zip(&gen.features)
                .map(|(id, f)| Ok((id.clone(), cosine_similarity(f, b)?)))
                .collect::<fairqueue_core::Result<BTreeMap<_, _>>>()?;
            (Some(text_alignment(&gen.features, b)?), per)
        }
        (None, None) => (None, BTreeMap::new()),
    };

    let fid = reference
        .as_ref()
        .map(|r| frechet_distance(&r.features, &gen.features))
        .transpose()?;

    let ds = match (&args.ds_scores, &reference) {
        (Some(path), _) => Some(SemanticDistances::from_scores(read_scores(path)?)?),
        (None, Some(r)) => {
            let pair = |l: &Loaded| -> Vec<(String, Vec<f64>)> { l.ids.iter().cloned().zip(l.features.iter().cloned()).collect() };
            Some(semantic_distance(&pair(r), &pair(&gen))?)
        }
        (None, None) => None,
    };
    let ds_per: BTreeMap<String, f64> = ds.as_ref().map(|d| d.pairs.iter().cloned().collect()).unwrap_or_default();

    let metrics = Metrics {
        fd: Some(fd),
        ta,
        fid,
        ds: ds.map(|d| d.mean),
    };

    ensure_dir(out)?;
    let mut manifest = RunManifest::new("evaluate", config, None, Vec::new(), json!({ "args": args }));
    write_text(&out.join(METRICS_FILE), &(serde_json::to_string_pretty(&metrics).expect("serialises") + "\n"))?;
    manifest.outputs.push(METRICS_FILE.into());
    let cell = |m: &BTreeMap<String, f64>, id: &str| m.get(id).map_or(String::new(), f64::to_string);
    let table = csv(
        PER_SAMPLE_HEADER,
        gen.ids
            .iter()
            .zip(&preds)
            .map(|(id, k)| format!("{id},{k},{},{}", cell(&ta_per, id), cell(&ds_per, id))),
    );
    write_text(&out.join(PER_SAMPLE_FILE), &table)?;
    manifest.outputs.push(PER_SAMPLE_FILE.into());
    manifest.write(out)?;
    Ok((manifest, metrics))
}

/// Writes a labelled feature matrix in FQEM; used to hand features between
/// commands and in tests.
pub fn write_features(path: &Path, ids: &[String], features: &[Vec<f64>]) -> Result<()> {
    let m = EmbeddingMatrix::from_rows(features)?.with_labels(ids.to_vec())?;
    fqem::write(path, &m, None)?;
    Ok(())
}
