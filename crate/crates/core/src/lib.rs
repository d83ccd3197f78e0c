//! Prompt scheduling for fair text-to-image sampling on a toy latent
//! denoiser: prompt composition and token learning, FairQueue-style prompt
//! queuing with attention amplification, cross-attention forensics and the
//! FD / TA / FID / DS evaluation metrics.

pub mod denoiser;
pub mod error;
pub mod eval;
pub mod forensics;
pub mod numerics;
pub mod prompt;
pub mod schedule;

pub use error::{Error, Result};
