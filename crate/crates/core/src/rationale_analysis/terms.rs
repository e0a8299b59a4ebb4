use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::RationaleError;
use crate::data_model::{Attribute, PredictionRecord, PromptId, SongRecord};

/// One explanation with the labels it accompanied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reasoned<'a> {
    pub truth: usize,
    pub pred: Option<usize>,
    pub reasoning: &'a str,
}

/// Explanations for one (model, prompt) cell, joined to ground truth.
pub fn reasoned_records<'a>(
    songs: &[SongRecord],
    predictions: &'a [PredictionRecord],
    attribute: Attribute,
    model_id: &str,
    prompt_id: PromptId,
) -> Vec<Reasoned<'a>> {
    let truth: HashMap<&str, usize> = songs.iter().map(|s| (s.song_id.as_str(), s.truth(attribute))).collect();
    predictions
        .iter()
        .filter(|p| p.model_id == model_id && p.prompt_id == prompt_id)
        .filter_map(|p| {
            Some(Reasoned {
                truth: *truth.get(p.song_id.as_str())?,
                pred: p.predicted(attribute),
                reasoning: p.reasoning(attribute)?,
            })
        })
        .collect()
}

/// Lowercase, split on non-alphanumerics, drop tokens shorter than three
/// characters and stopwords.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 3 && !stopwords.contains(*t))
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermDivergence {
    pub modality: usize,
    /// `(token, freq_in_wrong − freq_overall)`, highest first; ties by token.
    pub terms: Vec<(String, f64)>,
}

fn relative_frequencies<'a>(docs: impl Iterator<Item = &'a str>, stopwords: &HashSet<String>) -> (BTreeMap<String, f64>, usize) {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0usize;
    for doc in docs {
        for t in tokenize(doc, stopwords) {
            *counts.entry(t).or_default() += 1.0;
            total += 1;
        }
    }
    if total > 0 {
        for v in counts.values_mut() {
            *v /= total as f64;
        }
    }
    (counts, total)
}

/// Excess word frequency in explanations of wrong predictions for
/// `modality` (true label `modality`, predicted something else) over all
/// explanations. Frequencies are pooled over each set's tokens.
pub fn term_divergence(
    records: &[Reasoned<'_>],
    modality: usize,
    stopwords: &HashSet<String>,
) -> Result<TermDivergence, RationaleError> {
    let with_text = || records.iter().filter(|r| !r.reasoning.trim().is_empty());
    let wrong = with_text().filter(|r| r.truth == modality && r.pred.is_some_and(|p| p != modality));
    let (wrong_freq, wrong_total) = relative_frequencies(wrong.map(|r| r.reasoning), stopwords);
    if wrong_total == 0 {
        return Err(RationaleError::NoWrongReasonings { modality });
    }
    let (all_freq, _) = relative_frequencies(with_text().map(|r| r.reasoning), stopwords);
    let mut terms: Vec<(String, f64)> = all_freq
        .iter()
        .map(|(t, f)| (t.clone(), wrong_freq.get(t).copied().unwrap_or(0.0) - f))
        .collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(TermDivergence { modality, terms })
}
