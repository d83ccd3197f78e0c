//! Experiment harness for fair prompt scheduling on the toy backend:
//! configuration, prompt banks, run manifests, attention dumps and the
//! `fairqueue` subcommands.

pub mod bank;
pub mod bridge;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dump;
pub mod error;
pub mod manifest;
pub mod run;
pub mod seeds;
pub mod spec;

pub use error::{HarnessError, Result};
