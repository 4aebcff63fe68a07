//! Likelihood-weighted supervised fine-tuning on models small enough to
//! compute exactly.
//!
//! - [`numerics`]: logit, binary entropy, clipping.
//! - [`distributions`]: categorical distributions, KL, sampling, and synthetic
//!   `(expert, base, target)` populations.
//! - [`weighting`]: the SFT, DFT, InfoSFT, calibrated and oracle weight rules.
//! - [`proximal`]: the one-step Gibbs update and population-level expected KL
//!   quantities.
//! - [`tabular`]: tabular policies, the weighted trainer, generation and
//!   `p̄` estimation.
//! - [`tasks`]: synthetic expert models and two-task draws.
//! - [`experiments`]: the sweeps behind the `infosft` binary.

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod numerics;
pub mod proximal;
pub mod tabular;
pub mod tasks;
pub mod weighting;

pub use error::{Error, Result};
