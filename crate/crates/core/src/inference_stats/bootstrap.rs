use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::data_model::{Attribute, LabelSchema};
use crate::fairness_metrics::{EvaluationSlice, Metric, MetricEstimate};

/// How many records to draw per stratum in each bootstrap iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumSize {
    Fixed(usize),
    /// A share of each stratum's own size, rounded, at least one record.
    Fraction(f64),
}

impl StratumSize {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            StratumSize::Fixed(n) => n,
            StratumSize::Fraction(f) => ((available as f64 * f).round() as usize).max(1),
        }
    }
}

/// `"500"` is a fixed count, `"0.1"` a fraction.
impl std::str::FromStr for StratumSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains('.') {
            let f: f64 = s.parse().map_err(|e| format!("bad fraction `{s}`: {e}"))?;
            if f > 0.0 && f <= 1.0 {
                Ok(StratumSize::Fraction(f))
            } else {
                Err(format!("fraction {f} outside (0, 1]"))
            }
        } else {
            match s.parse::<usize>() {
                Ok(0) => Err("stratum size must be positive".into()),
                Ok(n) => Ok(StratumSize::Fixed(n)),
                Err(e) => Err(format!("bad stratum size `{s}`: {e}")),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub iterations: usize,
    pub per_stratum_n: StratumSize,
    pub stratum_attribute: LabelSchema,
    pub seed: u64,
    pub confidence: f64,
}

impl BootstrapPlan {
    /// 1000 iterations at 95%, 300 draws per ethnicity modality and 500 per
    /// gender modality.
    pub fn for_attribute(attribute: Attribute, seed: u64) -> Self {
        let n = match attribute {
            Attribute::Gender => 500,
            Attribute::Ethnicity => 300,
        };
        Self {
            iterations: 1000,
            per_stratum_n: StratumSize::Fixed(n),
            stratum_attribute: attribute.schema().clone(),
            seed,
            confidence: 0.95,
        }
    }

    pub fn new(stratum_attribute: LabelSchema, per_stratum_n: StratumSize, seed: u64) -> Self {
        Self {
            iterations: 1000,
            per_stratum_n,
            stratum_attribute,
            seed,
            confidence: 0.95,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if self.iterations == 0 {
            return Err(StatsError::InvalidPlan("iterations must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(StatsError::InvalidPlan(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        match self.per_stratum_n {
            StratumSize::Fixed(0) => Err(StatsError::InvalidPlan("per-stratum n must be positive".into())),
            StratumSize::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(StatsError::InvalidPlan(format!("stratum fraction {f} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Independent generator for iteration `i`.
    pub(crate) fn rng(&self, iteration: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(iteration as u64);
        rng
    }
}

/// Replicate values of a statistic. Replicates where the statistic was
/// undefined are counted in `dropped`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDistribution {
    pub samples: Vec<f64>,
    pub dropped: usize,
    /// Smallest per-stratum draw size used.
    pub stratum_size: usize,
}

/// Resample `per_stratum_n` records with replacement from every stratum,
/// `plan.iterations` times, and evaluate `statistic` on each resample.
///
/// `strata[i]` is the stratum index of record `i` under
/// `plan.stratum_attribute`. Iteration `i` uses its own generator derived
/// from `(seed, i)`, so results do not depend on thread scheduling.
pub fn stratified_bootstrap<T, F>(
    records: &[T],
    strata: &[usize],
    plan: &BootstrapPlan,
    statistic: F,
) -> Result<BootstrapDistribution, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    plan.validate()?;
    if records.len() != strata.len() {
        return Err(StatsError::InvalidPlan(format!(
            "{} records but {} stratum labels",
            records.len(),
            strata.len()
        )));
    }
    let schema = &plan.stratum_attribute;
    let members = group_strata(strata, schema.len(), schema)?;
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(StatsError::EmptyStratum {
            name: schema.name(empty).unwrap_or("?").to_string(),
        });
    }
    resample(records, &members, plan, statistic)
}

fn group_strata(strata: &[usize], k: usize, schema: &LabelSchema) -> Result<Vec<Vec<usize>>, StatsError> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &s) in strata.iter().enumerate() {
        let slot = members.get_mut(s).ok_or_else(|| {
            StatsError::InvalidPlan(format!("stratum index {s} out of range for `{}`", schema.attribute_name()))
        })?;
        slot.push(i);
    }
    Ok(members)
}

/// Like [`stratified_bootstrap`], but strata without records are skipped
/// instead of rejected. Used for sub-populations (buckets) that need not
/// contain every modality.
pub fn stratified_bootstrap_present<T, F>(
    records: &[T],
    strata: &[usize],
    plan: &BootstrapPlan,
    statistic: F,
) -> Result<BootstrapDistribution, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    plan.validate()?;
    if records.len() != strata.len() {
        return Err(StatsError::InvalidPlan(format!(
            "{} records but {} stratum labels",
            records.len(),
            strata.len()
        )));
    }
    let schema = &plan.stratum_attribute;
    let members: Vec<Vec<usize>> = group_strata(strata, schema.len(), schema)?
        .into_iter()
        .filter(|m| !m.is_empty())
        .collect();
    if members.is_empty() {
        return Err(StatsError::NoReplicates);
    }
    resample(records, &members, plan, statistic)
}

fn resample<T, F>(
    records: &[T],
    members: &[Vec<usize>],
    plan: &BootstrapPlan,
    statistic: F,
) -> Result<BootstrapDistribution, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    let sizes: Vec<usize> = members.iter().map(|m| plan.per_stratum_n.resolve(m.len())).collect();
    let stratum_size = sizes.iter().copied().min().unwrap_or(0);

    let replicates: Vec<Option<f64>> = (0..plan.iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = plan.rng(it);
            let mut draw: Vec<&T> = Vec::with_capacity(sizes.iter().sum());
            for (m, &n) in members.iter().zip(&sizes) {
                for _ in 0..n {
                    draw.push(&records[m[rng.random_range(0..m.len())]]);
                }
            }
            statistic(&draw).filter(|v| v.is_finite())
        })
        .collect();
    let samples: Vec<f64> = replicates.iter().filter_map(|r| *r).collect();
    let dropped = replicates.len() - samples.len();
    if samples.is_empty() {
        return Err(StatsError::NoReplicates);
    }
    if dropped > 0 {
        log::warn!("{dropped} of {} bootstrap replicates were undefined and dropped", plan.iterations);
    }
    Ok(BootstrapDistribution {
        samples,
        dropped,
        stratum_size,
    })
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical `(α/2, 1 − α/2)` percentiles with linear interpolation.
pub fn percentile_ci(samples: &[f64], confidence: f64) -> Result<(f64, f64), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::NoReplicates);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidPlan(format!("confidence {confidence} outside (0, 1)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    Ok((
        quantile_sorted(&sorted, alpha / 2.0),
        quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    ))
}

/// Point value on the full data plus a stratified-bootstrap percentile CI.
pub fn bootstrap_estimate<T, F>(
    records: &[T],
    strata: &[usize],
    plan: &BootstrapPlan,
    statistic: F,
) -> Result<MetricEstimate, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Option<f64> + Sync,
{
    let all: Vec<&T> = records.iter().collect();
    let value = statistic(&all).ok_or(StatsError::UndefinedStatistic)?;
    let dist = stratified_bootstrap(records, strata, plan, &statistic)?;
    let ci = percentile_ci(&dist.samples, plan.confidence)?;
    Ok(MetricEstimate::with_interval(value, ci, plan.iterations, dist.stratum_size))
}

/// Bootstrap a slice metric from `(true, predicted)` pairs, stratified on the
/// true label. Invalid predictions are resampled too and then excluded from
/// the counts, as in the point estimate.
pub fn bootstrap_metric(
    pairs: &[(usize, Option<usize>)],
    metric: Metric,
    plan: &BootstrapPlan,
) -> Result<MetricEstimate, StatsError> {
    let schema = &plan.stratum_attribute;
    let strata: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let statistic = |draw: &[&(usize, Option<usize>)]| {
        let slice = EvaluationSlice::from_pairs(schema.clone(), draw.iter().map(|p| **p)).ok()?;
        metric.evaluate(&slice).ok()
    };
    bootstrap_estimate(pairs, &strata, plan, statistic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> LabelSchema {
        LabelSchema::new("x", ["A", "B"]).unwrap()
    }

    #[test]
    fn type7_percentiles_on_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = percentile_ci(&xs, 0.95).unwrap();
        assert!((lo - 3.475).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12);
        assert_eq!(percentile_ci(&[4.2; 7], 0.9).unwrap(), (4.2, 4.2));
    }

    #[test]
    fn constant_statistic_is_point_mass() {
        let recs: Vec<u8> = vec![0, 1, 0, 1];
        let strata = vec![0, 1, 0, 1];
        let plan = BootstrapPlan::new(ab(), StratumSize::Fixed(3), 1).with_iterations(50);
        let d = stratified_bootstrap(&recs, &strata, &plan, |_| Some(2.5)).unwrap();
        assert!(d.samples.iter().all(|&v| v == 2.5));
        assert_eq!(d.samples.len(), 50);
    }

    #[test]
    fn empty_stratum_is_named() {
        let plan = BootstrapPlan::new(ab(), StratumSize::Fixed(3), 1);
        let err = stratified_bootstrap(&[1u8, 2], &[0, 0], &plan, |_| Some(0.0)).unwrap_err();
        assert_eq!(err, StatsError::EmptyStratum { name: "B".into() });
    }

    #[test]
    fn fixed_seed_is_reproducible_and_seed_sensitive() {
        let recs: Vec<f64> = (0..40).map(f64::from).collect();
        let strata: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mean = |d: &[&f64]| Some(d.iter().copied().sum::<f64>() / d.len() as f64);
        let plan = BootstrapPlan::new(ab(), StratumSize::Fixed(10), 7).with_iterations(200);
        let a = stratified_bootstrap(&recs, &strata, &plan, mean).unwrap();
        let b = stratified_bootstrap(&recs, &strata, &plan, mean).unwrap();
        assert_eq!(a, b);
        let other = BootstrapPlan { seed: 8, ..plan };
        assert_ne!(a, stratified_bootstrap(&recs, &strata, &other, mean).unwrap());
    }

    #[test]
    fn accuracy_mean_tracks_population_value() {
        // 70% correct in each stratum
        let mut pairs = Vec::new();
        for t in 0..2usize {
            for i in 0..100 {
                pairs.push((t, Some(if i < 70 { t } else { 1 - t })));
            }
        }
        let plan = BootstrapPlan::new(ab(), StratumSize::Fixed(100), 42);
        let strata: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let stat = |d: &[&(usize, Option<usize>)]| {
            Some(d.iter().filter(|p| p.1 == Some(p.0)).count() as f64 / d.len() as f64)
        };
        let dist = stratified_bootstrap(&pairs, &strata, &plan, stat).unwrap();
        let m = dist.samples.iter().sum::<f64>() / dist.samples.len() as f64;
        assert!((m - 0.7).abs() < 0.01, "{m}");
        let est = bootstrap_metric(&pairs, Metric::Accuracy, &plan).unwrap();
        assert!((est.value - 0.7).abs() < 1e-12);
        assert!(est.ci_low < 0.7 && est.ci_high > 0.7);
        assert_eq!(est.stratum_size, 100);
    }

    #[test]
    fn plan_validation() {
        let plan = BootstrapPlan::new(ab(), StratumSize::Fixed(3), 1);
        assert!(plan.clone().with_iterations(0).validate().is_err());
        assert!(plan.clone().with_confidence(1.0).validate().is_err());
        assert!(BootstrapPlan::new(ab(), StratumSize::Fraction(0.0), 1).validate().is_err());
        assert_eq!(StratumSize::Fraction(0.1).resolve(300), 30);
        assert_eq!(StratumSize::Fraction(0.001).resolve(300), 1);
        assert_eq!("0.1".parse::<StratumSize>(), Ok(StratumSize::Fraction(0.1)));
        assert_eq!("300".parse::<StratumSize>(), Ok(StratumSize::Fixed(300)));
        assert!("0".parse::<StratumSize>().is_err() && "1.5".parse::<StratumSize>().is_err());
    }
}
