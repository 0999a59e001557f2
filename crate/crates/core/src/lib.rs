//! Core library for simulating a switch from race-based to
//! socioeconomic-status-based admissions preferences over a tiered
//! enrollment dataset.
//!
//! The pipeline: ingest (or synthesize) a student table, build an SES
//! score and low/high SES groups, fit conditional tier-enrollment
//! cascades and staged academic-outcome regressions with weakly
//! informative priors, reassign students to tiers under the
//! counterfactual policy, impute their outcomes, and pool results over
//! multiply-imputed replications.

pub mod dataset;
pub mod enrollment;
pub mod error;
pub mod logit;
pub mod mi;
pub mod outcomes;
pub mod pipeline;
pub mod reassign;
pub mod sampling;
pub mod ses;
pub mod synthgen;

pub use error::{Error, Result};
