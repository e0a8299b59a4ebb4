//! Report tables and the JSON bundle.
//!
//! Every table has a fixed column order and is rendered the same way on
//! every run, so re-running a report over the same inputs and seed yields
//! identical bytes. Divisions by zero in the divergence metrics appear as
//! `+inf` in both TSV and JSON.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::data_model::{write_atomic, Attribute, DataError, LabelSchema, PredictionRecord, PromptId, SongRecord};
use crate::fairness_metrics::{prediction_distribution, roc_point, EvaluationSlice, Metric, MetricError};
use crate::inference_stats::{bootstrap_metric, run_battery, BootstrapPlan, StatsError, StratumSize, TestReport};
use crate::rationale_analysis::{
    correlation_matrix, scored_rows, BucketAccuracy, CorrelationCell, RationaleError, TermDivergence,
};

pub const METRIC_COLUMNS: [&str; 9] = [
    "model", "prompt", "attribute", "metric", "value", "ci_low", "ci_high", "n_valid", "n_invalid",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Rationale(#[from] RationaleError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// `+inf` / `-inf` for infinities, shortest round-trip decimal otherwise.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn ser_value<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_value(*v))
    }
}

fn ser_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser_value(x, s),
        None => s.serialize_none(),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_else(|| "NA".into())
}

/// Identifies one evaluation cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub model: String,
    pub prompt: String,
    pub attribute: String,
}

impl CellKey {
    pub fn new(model: &str, prompt: impl ToString, attribute: impl ToString) -> Self {
        Self {
            model: model.to_string(),
            prompt: prompt.to_string(),
            attribute: attribute.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub metric: String,
    #[serde(serialize_with = "ser_value")]
    pub value: f64,
    #[serde(serialize_with = "ser_value")]
    pub ci_low: f64,
    #[serde(serialize_with = "ser_value")]
    pub ci_high: f64,
    pub n_valid: u64,
    pub n_invalid: u64,
}

/// Per-modality prediction share and ROC point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub modality: String,
    pub share: f64,
    #[serde(serialize_with = "ser_opt")]
    pub tpr: Option<f64>,
    #[serde(serialize_with = "ser_opt")]
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    #[serde(flatten)]
    pub key: CellKey,
    #[serde(flatten)]
    pub report: TestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub model: String,
    #[serde(flatten)]
    pub cell: CorrelationCell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    #[serde(flatten)]
    pub key: CellKey,
    pub bucketing: String,
    #[serde(flatten)]
    pub row: BucketAccuracy,
}

fn is_zero_division(e: &MetricError) -> bool {
    matches!(e, MetricError::ZeroMacroAccuracy | MetricError::ZeroMacroRecall)
}

/// Every [`Metric`] for one cell given `(true, predicted)` pairs. With a
/// plan, each value carries a stratified bootstrap CI (the plan's schema is
/// replaced by `schema`); without one the interval collapses on the value.
pub fn metric_rows(
    key: &CellKey,
    schema: &LabelSchema,
    pairs: &[(usize, Option<usize>)],
    plan: Option<&BootstrapPlan>,
) -> Result<Vec<MetricRow>, ReportError> {
    let slice = EvaluationSlice::from_pairs(schema.clone(), pairs.iter().copied())?;
    let plan = plan.map(|p| BootstrapPlan {
        stratum_attribute: schema.clone(),
        ..p.clone()
    });
    let mut rows = Vec::with_capacity(Metric::ALL.len());
    for metric in Metric::ALL {
        let (value, low, high) = match metric.evaluate(&slice) {
            Ok(v) => match &plan {
                Some(plan) => {
                    let est = bootstrap_metric(pairs, metric, plan)?;
                    (est.value, est.ci_low, est.ci_high)
                }
                None => (v, v, v),
            },
            Err(e) if is_zero_division(&e) => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e.into()),
        };
        rows.push(MetricRow {
            key: key.clone(),
            metric: metric.as_str().to_string(),
            value,
            ci_low: low,
            ci_high: high,
            n_valid: slice.n_valid(),
            n_invalid: slice.invalid(),
        });
    }
    Ok(rows)
}

pub fn distribution_rows(key: &CellKey, slice: &EvaluationSlice) -> Result<Vec<DistributionRow>, ReportError> {
    let shares = prediction_distribution(slice)?;
    Ok(shares
        .into_iter()
        .enumerate()
        .map(|(k, share)| {
            let roc = roc_point(slice, k).ok();
            DistributionRow {
                key: key.clone(),
                modality: slice.schema().name(k).unwrap_or("?").to_string(),
                share,
                tpr: roc.map(|r| r.tpr),
                fpr: roc.map(|r| r.fpr),
            }
        })
        .collect())
}

/// Joined `(true, predicted)` pairs for one (model, prompt).
pub fn cell_pairs(
    songs: &[SongRecord],
    predictions: &[PredictionRecord],
    attribute: Attribute,
    model_id: &str,
    prompt_id: PromptId,
) -> Vec<(usize, Option<usize>)> {
    let truth: std::collections::HashMap<&str, usize> =
        songs.iter().map(|s| (s.song_id.as_str(), s.truth(attribute))).collect();
    predictions
        .iter()
        .filter(|p| p.model_id == model_id && p.prompt_id == prompt_id)
        .filter_map(|p| Some((*truth.get(p.song_id.as_str())?, p.predicted(attribute))))
        .collect()
}

/// Distinct (model, prompt) pairs in sorted order.
pub fn cells(predictions: &[PredictionRecord]) -> Vec<(String, PromptId)> {
    let set: BTreeSet<(String, PromptId)> = predictions.iter().map(|p| (p.model_id.clone(), p.prompt_id)).collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub attributes: Vec<Attribute>,
    pub iterations: usize,
    /// Defaults to the per-attribute draw sizes when `None`.
    pub stratum_n: Option<StratumSize>,
    pub seed: u64,
    pub alpha: f64,
    pub min_clt_n: u64,
    pub correlations: bool,
}

impl ReportOptions {
    pub fn plan(&self, attribute: Attribute) -> BootstrapPlan {
        let mut plan = BootstrapPlan::for_attribute(attribute, self.seed).with_iterations(self.iterations);
        if let Some(n) = self.stratum_n {
            plan.per_stratum_n = n;
        }
        plan
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportBundle {
    pub metrics: Vec<MetricRow>,
    pub distributions: Vec<DistributionRow>,
    pub tests: Vec<TestRow>,
    pub correlations: Vec<CorrelationRow>,
    /// Cells that could not be produced, with the reason.
    pub failures: Vec<String>,
}

struct CellOutput {
    metrics: Result<Vec<MetricRow>, ReportError>,
    distributions: Result<Vec<DistributionRow>, ReportError>,
    tests: Result<TestRow, ReportError>,
}

fn evaluate_cell(key: &CellKey, schema: &LabelSchema, pairs: &[(usize, Option<usize>)], options: &ReportOptions, plan: &BootstrapPlan) -> CellOutput {
    let slice = EvaluationSlice::from_pairs(schema.clone(), pairs.iter().copied());
    let tests = slice
        .as_ref()
        .map_err(|e| ReportError::Metric(e.clone()))
        .and_then(|s| Ok(run_battery(&s.pred_counts(), plan, options.alpha, options.min_clt_n)?))
        .map(|report| TestRow { key: key.clone(), report });
    CellOutput {
        metrics: metric_rows(key, schema, pairs, Some(plan)),
        distributions: slice
            .map_err(ReportError::from)
            .and_then(|s| distribution_rows(key, &s)),
        tests,
    }
}

/// Metrics, distributions and the test battery for every (model, prompt,
/// attribute) cell, plus correlations for models with well-informed runs.
/// A failing cell is recorded in `failures` and the rest still run.
pub fn build_report(songs: &[SongRecord], predictions: &[PredictionRecord], options: &ReportOptions) -> ReportBundle {
    let mut jobs = Vec::new();
    for (model, prompt) in cells(predictions) {
        for &attribute in &options.attributes {
            jobs.push((model.clone(), prompt, attribute));
        }
    }
    let outputs: Vec<(CellKey, CellOutput)> = jobs
        .par_iter()
        .map(|(model, prompt, attribute)| {
            let key = CellKey::new(model, prompt, attribute);
            let pairs = cell_pairs(songs, predictions, *attribute, model, *prompt);
            let out = evaluate_cell(&key, attribute.schema(), &pairs, options, &options.plan(*attribute));
            (key, out)
        })
        .collect();

    let mut bundle = ReportBundle::default();
    let mut failures = Vec::new();
    for (key, out) in outputs {
        match out.metrics {
            Ok(rows) => bundle.metrics.extend(rows),
            Err(e) => failures.push(describe(&key, "metrics", &e)),
        }
        match out.distributions {
            Ok(rows) => bundle.distributions.extend(rows),
            Err(e) => failures.push(describe(&key, "distributions", &e)),
        }
        match out.tests {
            Ok(row) => bundle.tests.push(row),
            Err(e) => failures.push(describe(&key, "tests", &e)),
        }
    }

    if options.correlations {
        let models: BTreeSet<&str> = predictions
            .iter()
            .filter(|p| p.prompt_id.is_well_informed())
            .map(|p| p.model_id.as_str())
            .collect();
        for model in models {
            for &attribute in &options.attributes {
                let rows = scored_rows(songs, predictions, attribute, Some(model));
                match correlation_matrix(&rows, &options.plan(attribute)) {
                    Ok(cells) => bundle.correlations.extend(cells.into_iter().map(|cell| CorrelationRow {
                        model: model.to_string(),
                        cell,
                    })),
                    Err(e) => failures.push(describe(
                        &CellKey::new(model, "well_informed", attribute),
                        "correlations",
                        &e.into(),
                    )),
                }
            }
        }
    }
    bundle.failures = failures;
    bundle
}

fn describe(key: &CellKey, table: &str, e: &ReportError) -> String {
    format!("{table} {}/{}/{}: {e}", key.model, key.prompt, key.attribute)
}

pub fn metrics_tsv(rows: &[MetricRow]) -> String {
    let mut out = METRIC_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.key.model,
            r.key.prompt,
            r.key.attribute,
            r.metric,
            format_value(r.value),
            format_value(r.ci_low),
            format_value(r.ci_high),
            r.n_valid,
            r.n_invalid
        );
    }
    out
}

pub fn distributions_tsv(rows: &[DistributionRow]) -> String {
    let mut out = String::from("model\tprompt\tattribute\tmodality\tshare\ttpr\tfpr\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.key.model,
            r.key.prompt,
            r.key.attribute,
            r.modality,
            format_value(r.share),
            opt_cell(r.tpr),
            opt_cell(r.fpr)
        );
    }
    out
}

pub fn tests_tsv(rows: &[TestRow]) -> String {
    let mut out = String::from(
        "model\tprompt\tattribute\tchi2\tchi2_df\tchi2_p\tclt_min_adjusted_p\tw1\tw1_p\talpha\tbiased\n",
    );
    for r in rows {
        let t = &r.report;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.key.model,
            r.key.prompt,
            r.key.attribute,
            format_value(t.chi2.statistic),
            t.chi2.df,
            format_value(t.chi2.p),
            format_value(t.clt.min_adjusted_p),
            format_value(t.wasserstein.w1),
            format_value(t.wasserstein.p),
            t.alpha,
            t.biased
        );
    }
    out
}

pub fn correlations_tsv(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("model\tattribute\ttarget\tr\tci_low\tci_high\tband\tn\n");
    for r in rows {
        let c = &r.cell;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            c.attribute,
            c.target,
            format_value(c.r),
            format_value(c.ci.0),
            format_value(c.ci.1),
            c.band.as_str(),
            c.n
        );
    }
    out
}

/// `token<TAB>score`, one line per term, for word-cloud renderers.
pub fn terms_tsv(terms: &TermDivergence) -> String {
    let mut out = String::from("token\tscore\n");
    for (token, score) in &terms.terms {
        let _ = writeln!(out, "{token}\t{}", format_value(*score));
    }
    out
}

pub fn buckets_tsv(rows: &[BucketRow]) -> String {
    let mut out = String::from("model\tprompt\tattribute\tbucketing\tbucket\tvalue\tci_low\tci_high\tn_valid\n");
    for r in rows {
        let a = &r.row.accuracy;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.key.model,
            r.key.prompt,
            r.key.attribute,
            r.bucketing,
            r.row.bucket,
            format_value(a.value),
            format_value(a.ci_low),
            format_value(a.ci_high),
            r.row.n_valid
        );
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `report.json` plus one TSV per table, each written atomically.
pub fn write_bundle(dir: &Path, bundle: &ReportBundle) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_atomic(&dir.join("report.json"), to_json(bundle)?.as_bytes())?;
    write_atomic(&dir.join("metrics.tsv"), metrics_tsv(&bundle.metrics).as_bytes())?;
    write_atomic(&dir.join("distributions.tsv"), distributions_tsv(&bundle.distributions).as_bytes())?;
    write_atomic(&dir.join("tests.tsv"), tests_tsv(&bundle.tests).as_bytes())?;
    write_atomic(&dir.join("correlations.tsv"), correlations_tsv(&bundle.correlations).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3_pairs() -> (LabelSchema, Vec<(usize, Option<usize>)>) {
        let schema = LabelSchema::new("x", ["A", "B", "C"]).unwrap();
        let pairs = vec![
            (0, Some(0)),
            (0, Some(0)),
            (0, Some(1)),
            (1, Some(1)),
            (1, Some(1)),
            (1, Some(1)),
            (2, Some(0)),
            (2, Some(2)),
            (2, Some(2)),
        ];
        (schema, pairs)
    }

    #[test]
    fn k3_rows_carry_fixture_values() {
        let (schema, pairs) = k3_pairs();
        let key = CellKey::new("m", "regular", "x");
        let rows = metric_rows(&key, &schema, &pairs, None).unwrap();
        let get = |name: &str| rows.iter().find(|r| r.metric == name).unwrap().value;
        assert!((get("accuracy") - 7.0 / 9.0).abs() < 1e-12);
        assert!((get("mad") - 4.0 / 69.0).abs() < 1e-12);
        assert!((get("rd") - 4.0 / 21.0).abs() < 1e-12);
        assert!((get("macro_recall") - 7.0 / 9.0).abs() < 1e-12);
        assert!((get("macro_f1") - 244.0 / 315.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.n_valid == 9 && r.n_invalid == 0));
    }

    #[test]
    fn zero_recall_is_plus_infinity() {
        let schema = LabelSchema::new("x", ["A", "B"]).unwrap();
        let pairs = vec![(0, Some(1)), (1, Some(0))];
        let rows = metric_rows(&CellKey::new("m", "p", "x"), &schema, &pairs, None).unwrap();
        let rd = rows.iter().find(|r| r.metric == "rd").unwrap();
        assert_eq!(rd.value, f64::INFINITY);
        let tsv = metrics_tsv(&rows);
        assert!(tsv.contains("\trd\t+inf\t+inf\t+inf\t2\t0\n"), "{tsv}");
        let json = to_json(&rows).unwrap();
        assert!(json.contains("\"value\": \"+inf\""));
        assert!(!json.contains("null"));
    }

    #[test]
    fn header_has_fixed_column_order() {
        assert_eq!(
            metrics_tsv(&[]),
            "model\tprompt\tattribute\tmetric\tvalue\tci_low\tci_high\tn_valid\tn_invalid\n"
        );
    }

    #[test]
    fn bootstrapped_rows_are_reproducible() {
        let (schema, pairs) = k3_pairs();
        let plan = BootstrapPlan::new(schema.clone(), StratumSize::Fixed(3), 9).with_iterations(100);
        let key = CellKey::new("m", "p", "x");
        let a = metric_rows(&key, &schema, &pairs, Some(&plan)).unwrap();
        let b = metric_rows(&key, &schema, &pairs, Some(&plan)).unwrap();
        assert_eq!(metrics_tsv(&a), metrics_tsv(&b));
        assert!(a.iter().all(|r| r.ci_low <= r.value && r.value <= r.ci_high));
    }
}
