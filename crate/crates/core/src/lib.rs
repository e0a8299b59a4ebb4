//! Fairness auditing for zero-shot LLM author profiling on song lyrics.
//!
//! The crate covers the whole audit pipeline: corpus preparation
//! (deduplication, language identification, balancing), prompt rendering and
//! a chat-completions client, parsing of model answers, the per-modality
//! fairness metrics (MAD, RD and friends), the stratified bootstrap and the
//! three-test bias battery, and rationale / attribute analyses.
//!
//! All computations are deterministic given their inputs and seeds.

pub mod corpus_prep;
pub mod data_model;
pub mod fairness_metrics;
pub mod inference_stats;
pub mod llm_gateway;
pub mod rationale_analysis;
pub mod report;
pub mod response_parser;

pub use data_model::{
    Attribute, AttributeScoreVector, LabelSchema, ModelRun, PredictionRecord, PromptId,
    SongRecord, Source,
};
pub use fairness_metrics::{EvaluationSlice, MetricEstimate};
pub use inference_stats::{BootstrapPlan, StratumSize, TestReport};
