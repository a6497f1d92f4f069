//! Confidence-calibration engine for LLM question-answer corpora.
//!
//! The crate ingests JSONL corpora of LLM generations with precomputed
//! correctness labels, trains auxiliary probability models over them (one
//! sigmoid head per target LLM), fits post-hoc calibrators, computes four
//! calibration metrics, and aggregates results into win counts,
//! reliability-diagram bins and accuracy-vs-ECE series.
//!
//! Modules map onto the pipeline stages:
//! - [`corpus`]: load, validate, split and group record sets.
//! - [`metrics`]: ECE (squared/absolute), temperature-scaled ECE, Brier,
//!   selective accuracy-coverage AUC, reliability bins.
//! - [`calibrators`]: Platt and temperature scaling with bounded fits.
//! - [`losses`]: BCE, focal and AUC-surrogate objectives with gradients.
//! - [`auxmodel`]: hashed bag-of-words encoder, multi-head model, SGD loop.
//! - [`baselines`]: ingested-confidence baselines as probability series.
//! - [`analysis`]: win counting, accuracy-ECE series, Pearson correlation.

pub mod analysis;
pub mod auxmodel;
pub mod baselines;
pub mod calibrators;
pub mod corpus;
pub mod error;
pub mod losses;
pub mod math;
pub mod metrics;

pub use error::{Error, Result};
