//! Corpus filtering: near-duplicate titles, language identification for the
//! translation step, and balanced subsets.
//!
//! Text is normalized to Unicode NFC before tokenizing.

mod balance;
mod dedup;
mod langid;

use thiserror::Error;

pub use balance::{balance_subset, class_counts};
pub use dedup::{apply_dedup, cosine, dedup_titles, tfidf_vectors, title_tokens, DedupReport, SimilarPair, DEFAULT_THRESHOLD};
pub use langid::{
    detect_language, detect_language_with, fragments, needs_translation, FragmentClassifier,
    FragmentLanguage, LanguageVerdict, StopwordClassifier, MAX_OOV_RATIO, MIN_ENGLISH_RATIO,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CorpusError {
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("song id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("lyrics are empty")]
    EmptyLyrics,
    #[error("modality `{modality}` has {available} songs, {requested} requested")]
    Insufficient {
        modality: String,
        available: usize,
        requested: usize,
    },
}
