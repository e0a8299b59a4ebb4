use std::collections::HashMap;

use serde::Serialize;

use super::MetricError;
use crate::data_model::{Attribute, LabelSchema, PredictionRecord, PromptId, SongRecord};

/// Confusion counts `n[true][pred]` for one (model, prompt, attribute) cell,
/// plus the number of records whose prediction did not parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvaluationSlice {
    #[serde(skip)]
    schema: LabelSchema,
    counts: Vec<Vec<u64>>,
    invalid: u64,
}

impl EvaluationSlice {
    pub fn new(schema: LabelSchema, counts: Vec<Vec<u64>>, invalid: u64) -> Result<Self, MetricError> {
        let k = schema.len();
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(MetricError::Shape(format!(
                "expected a {k}x{k} count matrix for `{}`",
                schema.attribute_name()
            )));
        }
        Ok(Self {
            schema,
            counts,
            invalid,
        })
    }

    pub fn empty(schema: LabelSchema) -> Self {
        let k = schema.len();
        Self {
            schema,
            counts: vec![vec![0; k]; k],
            invalid: 0,
        }
    }

    /// Build from `(true, predicted)` pairs; `None` predictions count as invalid.
    pub fn from_pairs(
        schema: LabelSchema,
        pairs: impl IntoIterator<Item = (usize, Option<usize>)>,
    ) -> Result<Self, MetricError> {
        let mut slice = Self::empty(schema);
        for (t, p) in pairs {
            slice.add(t, p)?;
        }
        Ok(slice)
    }

    /// Join predictions for one (model, prompt) onto their songs.
    ///
    /// Predictions whose song is unknown are skipped. A record counts as
    /// invalid when its label for `attribute` is missing.
    pub fn from_records(
        songs: &[SongRecord],
        predictions: &[PredictionRecord],
        attribute: Attribute,
        model_id: &str,
        prompt_id: PromptId,
    ) -> Self {
        let truth: HashMap<&str, usize> = songs
            .iter()
            .map(|s| (s.song_id.as_str(), s.truth(attribute)))
            .collect();
        let mut slice = Self::empty(attribute.schema().clone());
        for p in predictions {
            if p.model_id != model_id || p.prompt_id != prompt_id {
                continue;
            }
            if let Some(&t) = truth.get(p.song_id.as_str()) {
                slice
                    .add(t, p.predicted(attribute))
                    .expect("built-in schema indices are in range");
            }
        }
        slice
    }

    pub fn add(&mut self, truth: usize, pred: Option<usize>) -> Result<(), MetricError> {
        let k = self.k();
        if truth >= k {
            return Err(MetricError::Shape(format!("true label {truth} out of range for K={k}")));
        }
        match pred {
            Some(p) if p >= k => Err(MetricError::Shape(format!(
                "predicted label {p} out of range for K={k}"
            ))),
            Some(p) => {
                self.counts[truth][p] += 1;
                Ok(())
            }
            None => {
                self.invalid += 1;
                Ok(())
            }
        }
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn invalid(&self) -> u64 {
        self.invalid
    }

    pub fn n_valid(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn total(&self) -> u64 {
        self.n_valid() + self.invalid
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    /// Column sums: how often each modality was predicted.
    pub fn pred_counts(&self) -> Vec<u64> {
        (0..self.k()).map(|k| self.col_sum(k)).collect()
    }

    /// Multiply every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            schema: self.schema.clone(),
            counts: self
                .counts
                .iter()
                .map(|row| row.iter().map(|c| c * factor).collect())
                .collect(),
            invalid: self.invalid * factor,
        }
    }

    /// Relabel modalities: old index `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, MetricError> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(MetricError::Shape(format!("not a permutation of 0..{k}")));
        }
        let modalities: Vec<String> = {
            let mut names = vec![String::new(); k];
            for (i, &p) in perm.iter().enumerate() {
                names[p] = self.schema.modalities()[i].clone();
            }
            names
        };
        let schema = LabelSchema::new(self.schema.attribute_name(), modalities)
            .map_err(|e| MetricError::Shape(e.to_string()))?;
        let mut counts = vec![vec![0; k]; k];
        for t in 0..k {
            for p in 0..k {
                counts[perm[t]][perm[p]] = self.counts[t][p];
            }
        }
        Ok(Self {
            schema,
            counts,
            invalid: self.invalid,
        })
    }
}
