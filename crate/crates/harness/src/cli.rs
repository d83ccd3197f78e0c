//! Argument parsing and dispatch for the `fairqueue` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commands::evaluate::{ClassifierSpec, EvaluateArgs, InputKind};
use crate::commands::switch::SwitchMode;
use crate::commands::{ablate, dump_attn, evaluate, generate, learn, switch};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::seeds::parse_seeds_arg;
use crate::spec::ScheduleSpec;

/// Caps the rayon pool when set.
pub const THREADS_ENV: &str = "FQ_THREADS";
pub const DEFAULT_SEEDS: &str = "100";

#[derive(Debug, Parser)]
#[command(name = "fairqueue", version, about = "Fair prompt scheduling experiments on a toy diffusion backend")]
pub struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// A count (seeds `seed_base..seed_base+n`) or a file of seeds.
    #[arg(long, default_value = DEFAULT_SEEDS)]
    pub seeds: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn per-category tokens against `learn.refs`.
    LearnTokens {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a sample set under one schedule.
    Generate {
        /// Schedule JSON, inline or as a file path. Defaults to the config's.
        #[arg(long)]
        schedule: Option<String>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_attention: bool,
        /// Regenerate the run described by a manifest; other inputs are ignored.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// I2H / H2I switching study with stage-wise attention forensics.
    Switch {
        #[arg(long, value_enum)]
        mode: SwitchMode,
        #[arg(long)]
        n_switch: usize,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep amplification and transition point.
    Ablate {
        /// Comma-separated amplification factors. Default 0..=12.
        #[arg(long, value_delimiter = ',')]
        c: Vec<f64>,
        /// Comma-separated transition fractions of l. Default 0,0.1,0.2,0.3.
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// FD, TA, FID and DS over a generated set.
    Evaluate {
        /// FQEM file or a `generate` run directory.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "images")]
        input: InputKind,
        /// `toy` or a `sample_id,category` CSV.
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        ta_base: Option<PathBuf>,
        #[arg(long)]
        ds_scores: Option<PathBuf>,
        #[arg(long)]
        ta_scores: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect an attention dump.
    DumpAttn {
        path: PathBuf,
        /// Also write full-window accumulated maps here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialises"));
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn main<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(HarnessError::Config(e.to_string().trim_end().to_string())),
    };
    configure_threads()?;
    dispatch(cli)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let load = || ExperimentConfig::load_or_default(cli.config.as_deref());
    match &cli.command {
        Command::LearnTokens { out } => {
            let run = learn::run(&load()?, out)?;
            print_json(&run.manifest);
        }
        Command::Generate {
            schedule,
            seeds,
            out,
            dump_attention,
            manifest,
        } => {
            let m = match manifest {
                Some(path) => generate::rerun(path, out)?,
                None => {
                    let config = load()?;
                    let spec = match schedule {
                        Some(s) => ScheduleSpec::from_arg(s)?,
                        None => config.schedule.clone(),
                    };
                    let seeds = parse_seeds_arg(&seeds.seeds, config.seed_base)?;
                    generate::run(&config, &spec, &seeds, *dump_attention, out)?
                }
            };
            print_json(&m);
        }
        Command::Switch {
            mode,
            n_switch,
            seeds,
            bins,
            out,
        } => {
            let config = load()?;
            let seeds = parse_seeds_arg(&seeds.seeds, config.seed_base)?;
            let run = switch::run(&config, *mode, *n_switch, &seeds, *bins, out)?;
            print_json(&run.manifest);
        }
        Command::Ablate { c, fractions, seeds, out } => {
            let config = load()?;
            let seeds = parse_seeds_arg(&seeds.seeds, config.seed_base)?;
            let (grid_c, grid_f) = ablate::default_grid();
            let c = if c.is_empty() { grid_c } else { c.clone() };
            let f = if fractions.is_empty() { grid_f } else { fractions.clone() };
            let (m, _) = ablate::run(&config, &c, &f, &seeds, out)?;
            print_json(&m);
        }
        Command::Evaluate {
            generated,
            reference,
            input,
            classifier,
            ta_base,
            ds_scores,
            ta_scores,
            out,
        } => {
            let args = EvaluateArgs {
                generated: generated.clone(),
                reference: reference.clone(),
                input: *input,
                classifier: classifier.as_deref().map(ClassifierSpec::parse),
                ta_base: ta_base.clone(),
                ds_scores: ds_scores.clone(),
                ta_scores: ta_scores.clone(),
            };
            let (_, metrics) = evaluate::run(&load()?, &args, out)?;
            print_json(&metrics);
        }
        Command::DumpAttn { path, out } => {
            let config = load()?;
            let d = &config.denoiser;
            let summary = dump_attn::run(path, out.as_deref(), (d.image_height, d.image_width))?;
            print_json(&summary);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        let cli = Cli::try_parse_from(["fairqueue", "--config", "c.json", "generate", "--out", "o", "--dump-attention"]).unwrap();
        assert!(matches!(cli.command, Command::Generate { dump_attention: true, .. }));
        assert_eq!(cli.config, Some(PathBuf::from("c.json")));
        let cli = Cli::try_parse_from(["fairqueue", "ablate", "--c", "0,1,2", "--out", "o"]).unwrap();
        match cli.command {
            Command::Ablate { c, seeds, .. } => {
                assert_eq!(c, vec![0.0, 1.0, 2.0]);
                assert_eq!(seeds.seeds, DEFAULT_SEEDS);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["fairqueue", "switch", "--mode", "i2h", "--n-switch", "3", "--out", "o"]).is_ok());
        assert!(Cli::try_parse_from(["fairqueue", "dump-attn", "a.fqat"]).is_ok());
        assert!(Cli::try_parse_from(["fairqueue", "learn-tokens", "--out", "o"]).is_ok());
        assert!(Cli::try_parse_from(["fairqueue", "evaluate", "--generated", "g", "--out", "o"]).is_ok());
    }

    #[test]
    fn bad_arguments_are_config_errors() {
        let err = main(["fairqueue", "switch", "--mode", "sideways"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
