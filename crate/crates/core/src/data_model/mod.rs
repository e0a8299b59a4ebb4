//! Canonical record types, label normalization, and the flat-file schemas
//! shared by every other module.

mod io;
mod labels;
mod records;

use thiserror::Error;

pub use io::{
    load_predictions, load_records, load_released, parse_key_values, prediction_json, read_word_list,
    save_predictions, save_records, write_atomic, ColumnMapping, Format, ReleasedData,
};
pub use labels::{normalize_label, Attribute, LabelSchema};
pub use records::{
    count_words, AttributeScoreVector, Decoding, ModelRun, PredictionRecord, PromptId, SongRecord,
    Source, ATTRIBUTE_NAMES,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error("{path}: row {row}: {source}")]
    Row {
        path: String,
        row: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("{path}: row {row}: duplicate record {key} (first seen at row {first})")]
    Duplicate {
        path: String,
        row: usize,
        first: usize,
        key: String,
    },
    #[error("{path}: row {row}: malformed {format}: {message}")]
    Malformed {
        path: String,
        row: usize,
        format: &'static str,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
}

impl DataError {
    /// Row number of the offending line, when the error points at one.
    pub fn row(&self) -> Option<usize> {
        match self {
            DataError::Row { row, .. }
            | DataError::Duplicate { row, .. }
            | DataError::Malformed { row, .. } => Some(*row),
            _ => None,
        }
    }
}
