use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvaluationSlice, MetricError};

/// Per-modality values and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub per_modality: Vec<f64>,
    pub aggregate: f64,
}

fn require_valid(slice: &EvaluationSlice) -> Result<f64, MetricError> {
    match slice.n_valid() {
        0 => Err(MetricError::EmptySlice),
        n => Ok(n as f64),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean relative absolute deviation from the mean.
fn relative_divergence(values: Vec<f64>, zero: MetricError) -> Result<Divergence, MetricError> {
    let m = mean(&values);
    if m == 0.0 {
        return Err(zero);
    }
    let per_modality: Vec<f64> = values.iter().map(|v| (v - m).abs() / m).collect();
    let aggregate = mean(&per_modality);
    Ok(Divergence {
        per_modality,
        aggregate,
    })
}

/// One-vs-rest accuracy for modality `k`: records where "is k" was predicted
/// correctly, whether positively or negatively.
pub fn per_modality_accuracy(slice: &EvaluationSlice, k: usize) -> Result<f64, MetricError> {
    let n = require_valid(slice)?;
    let kk = slice.counts()[k][k] as f64;
    let row = slice.row_sum(k) as f64;
    let col = slice.col_sum(k) as f64;
    Ok((n - row - col + 2.0 * kk) / n)
}

pub fn accuracy_vector(slice: &EvaluationSlice) -> Result<Vec<f64>, MetricError> {
    (0..slice.k()).map(|k| per_modality_accuracy(slice, k)).collect()
}

/// Plain multi-class accuracy: trace over valid total.
pub fn overall_accuracy(slice: &EvaluationSlice) -> Result<f64, MetricError> {
    let n = require_valid(slice)?;
    let trace: u64 = (0..slice.k()).map(|k| slice.counts()[k][k]).sum();
    Ok(trace as f64 / n)
}

/// Modality Accuracy Divergence.
pub fn mad(slice: &EvaluationSlice) -> Result<Divergence, MetricError> {
    relative_divergence(accuracy_vector(slice)?, MetricError::ZeroMacroAccuracy)
}

pub fn recall_per_modality(slice: &EvaluationSlice, k: usize) -> Result<f64, MetricError> {
    match slice.row_sum(k) {
        0 => Err(MetricError::EmptyRow {
            modality: slice.schema().name(k).unwrap_or("?").to_string(),
        }),
        row => Ok(slice.counts()[k][k] as f64 / row as f64),
    }
}

pub fn recall_vector(slice: &EvaluationSlice) -> Result<Vec<f64>, MetricError> {
    (0..slice.k()).map(|k| recall_per_modality(slice, k)).collect()
}

pub fn macro_recall(slice: &EvaluationSlice) -> Result<f64, MetricError> {
    Ok(mean(&recall_vector(slice)?))
}

/// Recall Divergence from a vector of per-modality recalls.
pub fn rd_from_recalls(recalls: &[f64]) -> Result<Divergence, MetricError> {
    if recalls.is_empty() {
        return Err(MetricError::EmptySlice);
    }
    relative_divergence(recalls.to_vec(), MetricError::ZeroMacroRecall)
}

/// Recall Divergence.
pub fn rd(slice: &EvaluationSlice) -> Result<Divergence, MetricError> {
    rd_from_recalls(&recall_vector(slice)?)
}

/// The alternative RD reading that matches the tabular-dataset comparison
/// table: `raw = Σ|Rec_k − R̄| / K²` and `normalized = raw / R̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdScaled {
    pub raw: f64,
    pub normalized: f64,
}

pub fn rd_scaled_from_recalls(recalls: &[f64]) -> Result<RdScaled, MetricError> {
    if recalls.is_empty() {
        return Err(MetricError::EmptySlice);
    }
    let k = recalls.len() as f64;
    let m = mean(recalls);
    let raw = recalls.iter().map(|r| (r - m).abs()).sum::<f64>() / (k * k);
    if m == 0.0 {
        return Err(MetricError::ZeroMacroRecall);
    }
    Ok(RdScaled {
        raw,
        normalized: raw / m,
    })
}

pub fn rd_scaled(slice: &EvaluationSlice) -> Result<RdScaled, MetricError> {
    rd_scaled_from_recalls(&recall_vector(slice)?)
}

/// Unweighted mean of per-class F1. A class never predicted and never
/// present contributes 0.
pub fn macro_f1(slice: &EvaluationSlice) -> Result<f64, MetricError> {
    require_valid(slice)?;
    let f1s: Vec<f64> = (0..slice.k())
        .map(|k| {
            let tp = slice.counts()[k][k] as f64;
            let denom = (slice.row_sum(k) + slice.col_sum(k)) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    Ok(mean(&f1s))
}

/// Hard-prediction ROC point for modality `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub tpr: f64,
    pub fpr: f64,
}

pub fn roc_point(slice: &EvaluationSlice, k: usize) -> Result<RocPoint, MetricError> {
    let tpr = recall_per_modality(slice, k)?;
    let negatives: u64 = (0..slice.k()).filter(|&t| t != k).map(|t| slice.row_sum(t)).sum();
    if negatives == 0 {
        return Err(MetricError::EmptyRow {
            modality: format!("not {}", slice.schema().name(k).unwrap_or("?")),
        });
    }
    let false_pos: u64 = (0..slice.k()).filter(|&t| t != k).map(|t| slice.counts()[t][k]).sum();
    Ok(RocPoint {
        tpr,
        fpr: false_pos as f64 / negatives as f64,
    })
}

/// Share of valid predictions falling on each modality.
pub fn prediction_distribution(slice: &EvaluationSlice) -> Result<Vec<f64>, MetricError> {
    let n = require_valid(slice)?;
    Ok(slice.pred_counts().into_iter().map(|c| c as f64 / n).collect())
}

/// Scalar metrics addressable by name in reports and bootstraps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Mad,
    Rd,
    MacroRecall,
    MacroF1,
    RdScaled,
    RdScaledNormalized,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Accuracy,
        Metric::Mad,
        Metric::Rd,
        Metric::MacroRecall,
        Metric::MacroF1,
        Metric::RdScaled,
        Metric::RdScaledNormalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Mad => "mad",
            Metric::Rd => "rd",
            Metric::MacroRecall => "macro_recall",
            Metric::MacroF1 => "macro_f1",
            Metric::RdScaled => "rd_scaled",
            Metric::RdScaledNormalized => "rd_scaled_normalized",
        }
    }

    pub fn evaluate(self, slice: &EvaluationSlice) -> Result<f64, MetricError> {
        match self {
            Metric::Accuracy => overall_accuracy(slice),
            Metric::Mad => mad(slice).map(|d| d.aggregate),
            Metric::Rd => rd(slice).map(|d| d.aggregate),
            Metric::MacroRecall => macro_recall(slice),
            Metric::MacroF1 => macro_f1(slice),
            Metric::RdScaled => rd_scaled(slice).map(|r| r.raw),
            Metric::RdScaledNormalized => rd_scaled(slice).map(|r| r.normalized),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace('-', "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| MetricError::Shape(format!("unknown metric `{s}`")))
    }
}
