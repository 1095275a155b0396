//! Clickbait spoiling toolkit.
//!
//! * [`corpus`]: JSONL loading, validation and split statistics.
//! * [`metrics`]: BLEU-4 and balanced accuracy.
//! * [`cascade`]: two-stage spoiler-type classification and hyperparameter sweeps.
//! * [`spoiler`]: one-shot prompting and extractive spoilers.
//! * [`pipeline`]: backends, caching, configuration, persistence and the CLI.

pub mod cascade;
pub mod corpus;
pub mod metrics;
pub mod pipeline;
pub mod spoiler;
pub mod synth;
