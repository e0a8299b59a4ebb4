//! Explanations, score correlations and covariate breakdowns.

mod buckets;
mod correlation;
mod stopwords;
mod terms;

use thiserror::Error;

use crate::inference_stats::StatsError;

pub use buckets::{accuracy_by_bucket, BucketAccuracy, Bucketing, DEFAULT_BIN_CAP, DEFAULT_BIN_WIDTH};
pub use correlation::{correlation_matrix, pearson, pearson_correlation, scored_rows, Band, CorrelationCell, ScoredRow};
pub use stopwords::english_stopwords;
pub use terms::{reasoned_records, term_divergence, tokenize, Reasoned, TermDivergence};

#[derive(Debug, Error, PartialEq)]
pub enum RationaleError {
    #[error("no wrong predictions with reasoning for modality {modality}")]
    NoWrongReasonings { modality: usize },
    #[error("constant series")]
    ConstantSeries,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooShort(usize),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
