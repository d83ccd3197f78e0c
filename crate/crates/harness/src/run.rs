//! Shared experiment context and parallel sample generation.

use fairqueue_core::denoiser::{run_trajectory, AttentionRecord, Denoiser, Image, LatentState, ToyDenoiser};
use fairqueue_core::eval::{FeatureProvider, ToyClassifier, ToyFeatureProvider};
use fairqueue_core::schedule::PromptSchedule;
use rayon::prelude::*;

use crate::bank::PromptBank;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::seeds::enumerate_seeds;
use crate::spec::ScheduleSpec;

pub struct Context {
    pub config: ExperimentConfig,
    pub denoiser: ToyDenoiser,
    pub bank: PromptBank,
}

/// One generated sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub category: usize,
    pub initial: LatentState,
    pub final_state: LatentState,
    pub image: Image,
    pub records: Option<Vec<AttentionRecord>>,
}

impl Sample {
    pub fn id(&self) -> String {
        sample_id(self.seed)
    }
}

/// Samples are identified by seed, so sets generated from the same seed
/// list pair up across schedules.
pub fn sample_id(seed: u64) -> String {
    format!("seed{seed}")
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let denoiser = ToyDenoiser::new(config.denoiser.clone())?;
        let bank = PromptBank::from_config(&config)?;
        Ok(Self { config, denoiser, bank })
    }

    pub fn steps(&self) -> usize {
        self.denoiser.steps()
    }

    /// Sample `index` asks for category `index mod K`.
    pub fn category_of(&self, index: usize) -> usize {
        index % self.bank.categories()
    }

    pub fn schedule_for(&self, spec: &ScheduleSpec, index: usize) -> Result<PromptSchedule> {
        spec.build(&self.bank, self.category_of(index), self.steps())
    }

    pub fn feature_provider(&self) -> ToyFeatureProvider {
        let d = &self.config.denoiser;
        ToyFeatureProvider::for_image(d.image_height, d.image_width, self.config.eval.feature_dim, self.config.eval.feature_seed)
    }

    pub fn features(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        let provider = self.feature_provider();
        Ok(images
            .par_iter()
            .map(|im| provider.features(im))
            .collect::<fairqueue_core::Result<Vec<_>>>()?)
    }

    /// Places the toy classifier's cut at the median channel-0 mean of
    /// Constant(T) samples on the calibration seeds.
    pub fn calibrate_classifier(&self) -> Result<ToyClassifier> {
        let ev = &self.config.eval;
        let seeds = enumerate_seeds(ev.calibration_seed_base, ev.calibration_samples);
        let samples = generate(self, &ScheduleSpec::constant("base"), &seeds, false)?;
        let images: Vec<Image> = samples.into_iter().map(|s| s.image).collect();
        Ok(ToyClassifier::calibrate(&images)?)
    }

    /// Planted-attribute expression of a final latent: the planted-channel
    /// mean signed by the requested category's bias.
    pub fn expression(&self, state: &LatentState, category: usize) -> f64 {
        let d = &self.config.denoiser;
        d.category_bias[category] * state.channel_mean(d.planted_channel)
    }
}

/// Runs one trajectory per seed in parallel; output order follows `seeds`.
pub fn generate(ctx: &Context, spec: &ScheduleSpec, seeds: &[u64], keep_records: bool) -> Result<Vec<Sample>> {
    let schedules = (0..ctx.bank.categories())
        .map(|k| spec.build(&ctx.bank, k, ctx.steps()))
        .collect::<Result<Vec<_>>>()?;
    seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let category = ctx.category_of(index);
            let traj = run_trajectory(&ctx.denoiser, seed, &schedules[category])?;
            Ok(Sample {
                index,
                seed,
                category,
                initial: traj.initial,
                final_state: traj.final_state,
                image: traj.image,
                records: keep_records.then_some(traj.records),
            })
        })
        .collect()
}
