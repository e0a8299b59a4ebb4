//! Point metrics over confusion slices: one-vs-rest accuracy and MAD, recall
//! and RD, macro-F1, ROC points, prediction shares, and the binary DI / EoO
//! baselines.
//!
//! Invalid predictions never enter the counts; slices carry them separately
//! so reports can show the invalid rate next to every value.

mod binary;
mod metrics;
mod slice;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{disparate_impact, equality_of_odds, BinaryGroupRates, GroupGap};
pub use metrics::{
    accuracy_vector, macro_f1, macro_recall, mad, overall_accuracy, per_modality_accuracy,
    prediction_distribution, rd, rd_scaled, rd_scaled_from_recalls, rd_from_recalls,
    recall_per_modality, recall_vector, roc_point, Divergence, Metric, RdScaled, RocPoint,
};
pub use slice::EvaluationSlice;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("slice has no valid predictions")]
    EmptySlice,
    #[error("no records with true label `{modality}`")]
    EmptyRow { modality: String },
    #[error("macro-averaged accuracy is 0; MAD is undefined")]
    ZeroMacroAccuracy,
    #[error("macro recall is 0; RD is undefined")]
    ZeroMacroRecall,
    #[error("{0}")]
    Shape(String),
}

/// A point value with its bootstrap interval.
///
/// `iterations == 0` means no resampling was done and the interval collapses
/// onto the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub iterations: usize,
    pub stratum_size: usize,
}

impl MetricEstimate {
    pub fn point(value: f64) -> Self {
        Self {
            value,
            ci_low: value,
            ci_high: value,
            iterations: 0,
            stratum_size: 0,
        }
    }

    /// Attach a percentile interval. The interval is widened to include the
    /// point value, which a skewed bootstrap distribution can otherwise miss.
    pub fn with_interval(value: f64, (low, high): (f64, f64), iterations: usize, stratum_size: usize) -> Self {
        Self {
            value,
            ci_low: low.min(value),
            ci_high: high.max(value),
            iterations,
            stratum_size,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}
