use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::RationaleError;
use crate::data_model::{Attribute, PredictionRecord, SongRecord, ATTRIBUTE_NAMES};
use crate::inference_stats::{percentile_ci, stratified_bootstrap, BootstrapPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    DeepNeg,
    LightNeg,
    Neutral,
    LightPos,
    DeepPos,
}

impl Band {
    pub const DEEP: f64 = 0.20;
    pub const LIGHT: f64 = 0.10;

    /// The whole interval has to clear a threshold, not just the point value.
    pub fn from_ci(low: f64, high: f64) -> Band {
        if low > Self::DEEP {
            Band::DeepPos
        } else if low > Self::LIGHT {
            Band::LightPos
        } else if high < -Self::DEEP {
            Band::DeepNeg
        } else if high < -Self::LIGHT {
            Band::LightNeg
        } else {
            Band::Neutral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::DeepNeg => "deep_neg",
            Band::LightNeg => "light_neg",
            Band::Neutral => "neutral",
            Band::LightPos => "light_pos",
            Band::DeepPos => "deep_pos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub attribute: String,
    pub target: String,
    pub r: f64,
    pub ci: (f64, f64),
    pub band: Band,
    pub n: usize,
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, RationaleError> {
    if x.len() != y.len() {
        return Err(RationaleError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RationaleError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RationaleError::ConstantSeries);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson r between `scores` and `indicator` with a stratified bootstrap
/// interval (`strata` indexes `plan.stratum_attribute`). Resamples where
/// either series is constant are dropped.
pub fn pearson_correlation(
    attribute: &str,
    target: &str,
    scores: &[f64],
    indicator: &[f64],
    strata: &[usize],
    plan: &BootstrapPlan,
) -> Result<CorrelationCell, RationaleError> {
    let r = pearson(scores, indicator)?;
    let pairs: Vec<(f64, f64)> = scores.iter().copied().zip(indicator.iter().copied()).collect();
    let dist = stratified_bootstrap(&pairs, strata, plan, |draw| {
        let (x, y): (Vec<f64>, Vec<f64>) = draw.iter().map(|p| **p).unzip();
        pearson(&x, &y).ok()
    })?;
    let (low, high) = percentile_ci(&dist.samples, plan.confidence)?;
    let ci = (low.min(r), high.max(r));
    Ok(CorrelationCell {
        attribute: attribute.to_string(),
        target: target.to_string(),
        r,
        ci,
        band: Band::from_ci(ci.0, ci.1),
        n: scores.len(),
    })
}

/// One row per well-informed prediction with a label for `attribute`:
/// the (song, model) scores averaged over the two well-informed variants,
/// the predicted label, and the true label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub scores: [f64; 20],
    pub pred: usize,
    pub truth: usize,
}

pub fn scored_rows(
    songs: &[SongRecord],
    predictions: &[PredictionRecord],
    attribute: Attribute,
    model_id: Option<&str>,
) -> Vec<ScoredRow> {
    let truth: HashMap<&str, usize> = songs.iter().map(|s| (s.song_id.as_str(), s.truth(attribute))).collect();
    let selected: Vec<&PredictionRecord> = predictions
        .iter()
        .filter(|p| p.prompt_id.is_well_informed())
        .filter(|p| model_id.is_none_or(|m| p.model_id == m))
        .collect();
    let mut sums: BTreeMap<(&str, &str), ([f64; 20], usize)> = BTreeMap::new();
    for p in &selected {
        if let Some(v) = &p.attribute_scores {
            let entry = sums.entry((&p.song_id, &p.model_id)).or_insert(([0.0; 20], 0));
            for (slot, x) in entry.0.iter_mut().zip(v.values()) {
                *slot += *x as f64;
            }
            entry.1 += 1;
        }
    }
    selected
        .iter()
        .filter_map(|p| {
            let (sum, n) = sums.get(&(p.song_id.as_str(), p.model_id.as_str()))?;
            let mut scores = *sum;
            for s in scores.iter_mut() {
                *s /= *n as f64;
            }
            Some(ScoredRow {
                scores,
                pred: p.predicted(attribute)?,
                truth: *truth.get(p.song_id.as_str())?,
            })
        })
        .collect()
}

/// Every (score attribute × predicted-modality indicator) cell. Cells where
/// a series is constant are skipped with a warning.
pub fn correlation_matrix(rows: &[ScoredRow], plan: &BootstrapPlan) -> Result<Vec<CorrelationCell>, RationaleError> {
    let schema = plan.stratum_attribute.clone();
    let strata: Vec<usize> = rows.iter().map(|r| r.truth).collect();
    let mut cells = Vec::new();
    for (a, name) in ATTRIBUTE_NAMES.iter().enumerate() {
        let scores: Vec<f64> = rows.iter().map(|r| r.scores[a]).collect();
        for (k, modality) in schema.modalities().iter().enumerate() {
            let indicator: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.pred == k))).collect();
            let target = format!("pred_{modality}");
            match pearson_correlation(name, &target, &scores, &indicator, &strata, plan) {
                Ok(cell) => cells.push(cell),
                Err(RationaleError::ConstantSeries) => {
                    log::warn!("skipping {name} vs {target}: constant series");
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::LabelSchema;
    use crate::inference_stats::StratumSize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plan() -> BootstrapPlan {
        BootstrapPlan::new(LabelSchema::new("x", ["A", "B"]).unwrap(), StratumSize::Fraction(1.0), 11).with_iterations(300)
    }

    #[test]
    fn identical_series_correlate_perfectly() {
        let x = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let strata = [0, 1, 1, 0, 1, 0];
        let c = pearson_correlation("a", "t", &x, &x, &strata, &plan()).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert_eq!(c.band, Band::DeepPos);
    }

    #[test]
    fn independent_noise_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(1..=10) as f64).collect();
        let y: Vec<f64> = (0..1000).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let strata: Vec<usize> = y.iter().map(|v| *v as usize).collect();
        let c = pearson_correlation("a", "t", &x, &y, &strata, &plan()).unwrap();
        assert!(c.r.abs() < 0.1, "{}", c.r);
        assert_eq!(c.band, Band::Neutral);
    }

    #[test]
    fn constant_and_short_series() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[0.0, 1.0, 0.0]), Err(RationaleError::ConstantSeries));
        assert_eq!(pearson(&[1.0, 2.0], &[0.0, 1.0]), Err(RationaleError::TooShort(2)));
    }

    #[test]
    fn bands() {
        assert_eq!(Band::from_ci(0.21, 0.4), Band::DeepPos);
        assert_eq!(Band::from_ci(0.15, 0.4), Band::LightPos);
        assert_eq!(Band::from_ci(0.05, 0.4), Band::Neutral);
        assert_eq!(Band::from_ci(-0.5, -0.25), Band::DeepNeg);
        assert_eq!(Band::from_ci(-0.5, -0.12), Band::LightNeg);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn symmetric_and_affine_invariant(
            x in proptest::collection::vec(-50.0f64..50.0, 8),
            y in proptest::collection::vec(-50.0f64..50.0, 8),
            a in 0.1f64..10.0, b in -5.0f64..5.0,
        ) {
            if let (Ok(r), Ok(s)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((r - s).abs() < 1e-12);
                let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson(&scaled, &y).unwrap() - r).abs() < 1e-9);
            }
        }
    }
}
