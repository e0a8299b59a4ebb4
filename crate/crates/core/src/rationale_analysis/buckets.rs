use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::RationaleError;
use crate::data_model::{Attribute, PredictionRecord, PromptId, SongRecord};
use crate::fairness_metrics::MetricEstimate;
use crate::inference_stats::{percentile_ci, stratified_bootstrap_present, BootstrapPlan};

pub const DEFAULT_BIN_WIDTH: u32 = 100;
pub const DEFAULT_BIN_CAP: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucketing {
    /// `[lo, lo+width)` bins; everything at or above `cap` shares one bin.
    WordCountBins { width: u32, cap: u32 },
    Genre,
    Translated,
}

impl Default for Bucketing {
    fn default() -> Self {
        Bucketing::WordCountBins {
            width: DEFAULT_BIN_WIDTH,
            cap: DEFAULT_BIN_CAP,
        }
    }
}

impl Bucketing {
    /// Bucket label and a sort key that keeps numeric bins in order.
    fn assign(self, song: &SongRecord) -> (u32, String) {
        match self {
            Bucketing::WordCountBins { width, cap } => {
                if song.word_count >= cap {
                    (cap, format!("{cap}+"))
                } else {
                    let lo = song.word_count / width * width;
                    (lo, format!("{lo}-{}", lo + width - 1))
                }
            }
            Bucketing::Genre => (0, song.genre.clone().unwrap_or_else(|| "unknown".into())),
            Bucketing::Translated => (0, if song.needs_translation { "translated" } else { "original" }.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketAccuracy {
    pub bucket: String,
    pub n_valid: usize,
    pub accuracy: MetricEstimate,
}

/// Accuracy with a bootstrap CI inside each covariate bucket, for one
/// (model, prompt) cell. Only valid predictions are counted, so bucket sizes
/// add up to the valid total. Buckets without records never appear; buckets
/// whose bootstrap fails are skipped with a warning.
pub fn accuracy_by_bucket(
    songs: &[SongRecord],
    predictions: &[PredictionRecord],
    attribute: Attribute,
    model_id: &str,
    prompt_id: PromptId,
    bucketing: Bucketing,
    plan: &BootstrapPlan,
) -> Result<Vec<BucketAccuracy>, RationaleError> {
    if let Bucketing::WordCountBins { width: 0, .. } = bucketing {
        return Err(RationaleError::Config("bin width must be positive".into()));
    }
    let by_id: HashMap<&str, &SongRecord> = songs.iter().map(|s| (s.song_id.as_str(), s)).collect();
    let mut buckets: BTreeMap<(u32, String), Vec<(usize, usize)>> = BTreeMap::new();
    for p in predictions.iter().filter(|p| p.model_id == model_id && p.prompt_id == prompt_id) {
        let (Some(song), Some(pred)) = (by_id.get(p.song_id.as_str()), p.predicted(attribute)) else {
            continue;
        };
        buckets.entry(bucketing.assign(song)).or_default().push((song.truth(attribute), pred));
    }
    let accuracy = |d: &[&(usize, usize)]| {
        if d.is_empty() {
            None
        } else {
            Some(d.iter().filter(|(t, p)| t == p).count() as f64 / d.len() as f64)
        }
    };
    let mut out = Vec::new();
    for ((_, name), pairs) in buckets {
        let all: Vec<&(usize, usize)> = pairs.iter().collect();
        let Some(value) = accuracy(&all) else { continue };
        let strata: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let estimate = stratified_bootstrap_present(&pairs, &strata, plan, accuracy)
            .and_then(|d| Ok((percentile_ci(&d.samples, plan.confidence)?, d.stratum_size)));
        match estimate {
            Ok((ci, size)) => out.push(BucketAccuracy {
                bucket: name,
                n_valid: pairs.len(),
                accuracy: MetricEstimate::with_interval(value, ci, plan.iterations, size),
            }),
            Err(e) => log::warn!("bucket `{name}` omitted: {e}"),
        }
    }
    Ok(out)
}
