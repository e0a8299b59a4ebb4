//! Stratified bootstrap intervals and the three-test uniformity battery
//! (chi-squared, normal-approximation proportions, Wasserstein) with its
//! two-of-three decision rule.
//!
//! The Wasserstein test uses the 0/1 ground metric on unordered labels, so
//! its distance is the total-variation distance to uniform.

mod battery;
mod bootstrap;
pub mod special;

use thiserror::Error;

pub use battery::{
    chi_squared_uniform, clt_proportion_test, combined_decision, run_battery, w1_uniform,
    wasserstein_uniform_test, ChiSquared, CltTest, TestReport, WassersteinTest, DEFAULT_MIN_CLT_N,
};
pub use bootstrap::{
    bootstrap_estimate, bootstrap_metric, percentile_ci, stratified_bootstrap, stratified_bootstrap_present,
    BootstrapDistribution,
    BootstrapPlan, StratumSize,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("stratum `{name}` has no records")]
    EmptyStratum { name: String },
    #[error("need at least two categories, got {0}")]
    TooFewCategories(usize),
    #[error("all counts are zero")]
    EmptyCounts,
    #[error("n = {n} is below the normal-approximation guard of {min}; use an exact test")]
    SmallSample { n: u64, min: u64 },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("statistic is undefined on the full data")]
    UndefinedStatistic,
    #[error("every bootstrap replicate was undefined")]
    NoReplicates,
}
