use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use lyrics_audit::corpus_prep::{apply_dedup, balance_subset, class_counts, dedup_titles, detect_language};
use lyrics_audit::data_model::{
    load_predictions, load_records, load_released, read_word_list, save_predictions, save_records, write_atomic,
    ColumnMapping, Format,
};
use lyrics_audit::inference_stats::{run_battery, DEFAULT_MIN_CLT_N};
use lyrics_audit::llm_gateway::{render_prompt, ApiMode, Gateway, GatewayConfig, PromptTemplate, UreqTransport};
use lyrics_audit::rationale_analysis::{
    accuracy_by_bucket, correlation_matrix, english_stopwords, reasoned_records, scored_rows, term_divergence,
    Bucketing, RationaleError,
};
use lyrics_audit::report::{
    build_report, buckets_tsv, cell_pairs, cells, correlations_tsv, distribution_rows, distributions_tsv, metric_rows,
    metrics_tsv, terms_tsv, tests_tsv, to_json, write_bundle, BucketRow, CellKey, CorrelationRow, ReportOptions,
    TestRow,
};
use lyrics_audit::response_parser::{parse_into, parse_response};
use lyrics_audit::{Attribute, BootstrapPlan, EvaluationSlice, ModelRun, PredictionRecord, PromptId, SongRecord};

use crate::settings::ConfigFile;
use crate::{Cell, Cli, CliError, Command, Remote, Resampling};

const DEFAULT_ITERATIONS: usize = 1000;
const DEFAULT_ALPHA: f64 = 0.05;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            songs,
            released,
            mapping,
            out,
        } => ingest(songs.as_deref(), released.as_deref(), mapping.as_deref(), &out),
        Command::Dedup {
            songs,
            threshold,
            out,
            report,
        } => dedup(&songs, threshold, &out, report.as_deref()),
        Command::Langid { songs, vocabulary, out } => langid(&songs, &vocabulary, &out),
        Command::Translate { songs, remote, out } => translate(&cfg, &songs, &remote, &out),
        Command::Infer {
            songs,
            remote,
            prompt,
            temperature,
            max_tokens,
            out,
        } => infer(&cfg, &songs, &remote, prompt, temperature, max_tokens, &out),
        Command::Parse { predictions, out } => parse(&predictions, &out),
        Command::Balance {
            songs,
            attribute,
            per_class,
            seed,
            out,
        } => {
            let seed = cfg.require(seed, "seed", "--seed")?;
            let songs = read_songs(&songs)?;
            let per_class = per_class.unwrap_or_else(|| class_counts(&songs, attribute).into_iter().min().unwrap_or(0));
            let subset = balance_subset(&songs, attribute, per_class, seed).map_err(|e| CliError::stage("balance", e))?;
            write_songs(&out, &subset)
        }
        Command::Metrics {
            inputs,
            cell,
            resampling,
            balanced,
            out,
        } => {
            let (songs, preds) = read_inputs(&inputs.songs, &inputs.predictions)?;
            metrics(&cfg, &songs, &preds, &cell, &resampling, balanced, &out)
        }
        Command::Tests {
            inputs,
            cell,
            resampling,
            alpha,
            balanced,
            out,
        } => {
            let (songs, preds) = read_inputs(&inputs.songs, &inputs.predictions)?;
            tests(&cfg, &songs, &preds, &cell, &resampling, alpha, balanced, &out)
        }
        Command::Correlate {
            inputs,
            cell,
            resampling,
            out,
        } => {
            let (songs, preds) = read_inputs(&inputs.songs, &inputs.predictions)?;
            correlate(&cfg, &songs, &preds, &cell, &resampling, &out)
        }
        Command::Rationales {
            inputs,
            cell,
            resampling,
            out,
        } => {
            let (songs, preds) = read_inputs(&inputs.songs, &inputs.predictions)?;
            rationales(&cfg, &songs, &preds, &cell, &resampling, &out)
        }
        Command::Report {
            inputs,
            attribute,
            resampling,
            alpha,
            out,
        } => {
            let (songs, preds) = read_inputs(&inputs.songs, &inputs.predictions)?;
            let options = ReportOptions {
                attributes: attributes(attribute),
                iterations: iterations(&cfg, &resampling)?,
                stratum_n: cfg.pick(resampling.stratum_n, "stratum_n")?,
                seed: cfg.require(resampling.seed, "seed", "--seed")?,
                alpha: alpha_value(&cfg, alpha)?,
                min_clt_n: DEFAULT_MIN_CLT_N,
                correlations: true,
            };
            let bundle = build_report(&songs, &preds, &options);
            write_bundle(&out, &bundle).map_err(|e| CliError::stage("report", e))?;
            finish("report", &bundle.failures)
        }
    }
}

fn read_songs(path: &Path) -> Result<Vec<SongRecord>, CliError> {
    load_records(path, Format::from_path(path)).map_err(|e| CliError::stage("load", e))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    load_predictions(path, Format::from_path(path)).map_err(|e| CliError::stage("load", e))
}

fn read_inputs(songs: &Path, preds: &Path) -> Result<(Vec<SongRecord>, Vec<PredictionRecord>), CliError> {
    Ok((read_songs(songs)?, read_predictions(preds)?))
}

fn write_songs(path: &Path, songs: &[SongRecord]) -> Result<(), CliError> {
    save_records(path, Format::from_path(path), songs).map_err(|e| CliError::stage("write", e))
}

fn write_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<(), CliError> {
    save_predictions(path, Format::from_path(path), preds).map_err(|e| CliError::stage("write", e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::stage("write", e))
}

fn out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))
}

fn finish(stage: &'static str, failures: &[String]) -> Result<(), CliError> {
    for f in failures {
        log::error!("{f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::stage(stage, format!("{} cell(s) not produced; first: {}", failures.len(), failures[0])))
    }
}

fn attributes(attribute: Option<Attribute>) -> Vec<Attribute> {
    attribute.map(|a| vec![a]).unwrap_or_else(|| Attribute::ALL.to_vec())
}

fn iterations(cfg: &ConfigFile, r: &Resampling) -> Result<usize, CliError> {
    Ok(cfg.pick(r.iterations, "iterations")?.unwrap_or(DEFAULT_ITERATIONS))
}

fn alpha_value(cfg: &ConfigFile, alpha: Option<f64>) -> Result<f64, CliError> {
    let alpha = cfg.pick(alpha, "alpha")?.unwrap_or(DEFAULT_ALPHA);
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::Usage(format!("--alpha {alpha} outside (0, 1)")))
    }
}

/// Bootstrap plan for `attribute`, or `None` when `--iterations 0` asks for
/// point values only. A seed is mandatory otherwise.
fn plan(cfg: &ConfigFile, r: &Resampling, attribute: Attribute) -> Result<Option<BootstrapPlan>, CliError> {
    let iterations = iterations(cfg, r)?;
    if iterations == 0 {
        return Ok(None);
    }
    Ok(Some(required_plan(cfg, r, attribute)?))
}

fn required_plan(cfg: &ConfigFile, r: &Resampling, attribute: Attribute) -> Result<BootstrapPlan, CliError> {
    let seed = cfg.require(r.seed, "seed", "--seed")?;
    let iterations = iterations(cfg, r)?.max(1);
    let mut plan = BootstrapPlan::for_attribute(attribute, seed).with_iterations(iterations);
    if let Some(n) = cfg.pick(r.stratum_n, "stratum_n")? {
        plan.per_stratum_n = n;
    }
    Ok(plan)
}

fn selected_cells(preds: &[PredictionRecord], cell: &Cell) -> Vec<(String, PromptId)> {
    cells(preds)
        .into_iter()
        .filter(|(m, p)| cell.model.as_deref().is_none_or(|want| want == m) && cell.prompt.is_none_or(|want| want == *p))
        .collect()
}

/// Seeded subset with the smallest modality size drawn from every modality.
fn balanced_songs(songs: &[SongRecord], attribute: Attribute, seed: u64) -> Result<Vec<SongRecord>, CliError> {
    let per_class = class_counts(songs, attribute).into_iter().min().unwrap_or(0);
    if per_class == 0 {
        return Err(CliError::stage("balance", format!("some {attribute} modality has no songs")));
    }
    balance_subset(songs, attribute, per_class, seed).map_err(|e| CliError::stage("balance", e))
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("__")
}

fn ingest(songs: Option<&Path>, released: Option<&Path>, mapping: Option<&Path>, out: &Path) -> Result<(), CliError> {
    match (songs, released) {
        (Some(songs), None) => {
            let records = read_songs(songs)?;
            write_songs(out, &records)
        }
        (None, Some(released)) => {
            let mapping = mapping.ok_or_else(|| CliError::Usage("--released needs --mapping".into()))?;
            let mapping = ColumnMapping::from_file(mapping).map_err(|e| CliError::stage("ingest", e))?;
            let data = load_released(released, Format::from_path(released), &mapping).map_err(|e| CliError::stage("ingest", e))?;
            out_dir(out)?;
            write_songs(&out.join("songs.jsonl"), &data.songs)?;
            write_predictions(&out.join("predictions.jsonl"), &data.predictions)?;
            log::info!("ingested {} songs and {} predictions", data.songs.len(), data.predictions.len());
            Ok(())
        }
        _ => Err(CliError::Usage("ingest needs exactly one of --songs or --released".into())),
    }
}

fn dedup(songs: &Path, threshold: f64, out: &Path, report: Option<&Path>) -> Result<(), CliError> {
    let records = read_songs(songs)?;
    let result = dedup_titles(&records, threshold).map_err(|e| CliError::stage("dedup", e))?;
    write_songs(out, &apply_dedup(&records, &result))?;
    if let Some(path) = report {
        write_file(path, &to_json(&result).map_err(|e| CliError::stage("dedup", e))?)?;
    }
    eprintln!("kept {} of {} songs", result.kept.len(), records.len());
    Ok(())
}

fn langid(songs: &Path, vocabulary: &Path, out: &Path) -> Result<(), CliError> {
    let mut records = read_songs(songs)?;
    let vocab = read_word_list(vocabulary).map_err(|e| CliError::stage("langid", e))?;
    let mut flagged = 0;
    for song in records.iter_mut() {
        let Some(lyrics) = song.lyrics.as_deref().filter(|l| !l.trim().is_empty()) else {
            continue;
        };
        let verdict = detect_language(lyrics, &vocab).map_err(|e| CliError::stage("langid", e))?;
        song.needs_translation = verdict.needs_translation;
        flagged += usize::from(verdict.needs_translation);
    }
    write_songs(out, &records)?;
    eprintln!("{flagged} of {} songs need translation", records.len());
    Ok(())
}

fn gateway(cfg: &ConfigFile, remote: &Remote) -> Result<Gateway, CliError> {
    let mut config = GatewayConfig {
        api_key: std::env::var("AUDIT_API_KEY").ok().or(cfg.get("api_key")?),
        mode: if remote.completions { ApiMode::Completions } else { ApiMode::Chat },
        ..GatewayConfig::default()
    };
    if let Some(n) = cfg.pick(remote.concurrency, "concurrency")? {
        config.concurrency = n;
    }
    if let Some(n) = cfg.pick(remote.max_retries, "max_retries")? {
        config.max_retries = n;
    }
    if let Some(s) = cfg.pick(remote.timeout_secs, "timeout_secs")? {
        config.timeout = Duration::from_secs(s);
    }
    config.transcript = cfg.pick(remote.transcript.clone(), "transcript")?;
    let transport = Arc::new(UreqTransport::new(config.timeout));
    Gateway::with_transport(config, transport).map_err(|e| CliError::Usage(e.to_string()))
}

fn model_run(cfg: &ConfigFile, remote: &Remote, prompt: PromptId) -> Result<ModelRun, CliError> {
    let endpoint: String = cfg.require(remote.endpoint.clone(), "endpoint", "--endpoint")?;
    let model: String = cfg.require(remote.model.clone(), "model", "--model")?;
    Ok(ModelRun::new(model, prompt, endpoint))
}

fn translate(cfg: &ConfigFile, songs: &Path, remote: &Remote, out: &Path) -> Result<(), CliError> {
    let mut records = read_songs(songs)?;
    let gw = gateway(cfg, remote)?;
    let run = model_run(cfg, remote, PromptId::Regular)?.with_temperature(0.0).with_max_tokens(2048);
    let template = PromptTemplate::translation();
    let mut requests = Vec::new();
    for song in records.iter().filter(|s| s.needs_translation) {
        if let Some(lyrics) = song.lyrics.as_deref() {
            match render_prompt(&template, lyrics) {
                Ok(prompt) => requests.push((song.song_id.clone(), prompt)),
                Err(e) => log::warn!("{}: {e}", song.song_id),
            }
        }
    }
    let results = gw.complete_batch(&run, &requests).map_err(|e| CliError::stage("translate", e))?;
    let mut failures = Vec::new();
    for song in records.iter_mut() {
        match results.get(&song.song_id) {
            Some(Ok(c)) => song.translated_lyrics = Some(c.text.trim().to_string()),
            Some(Err(e)) => failures.push(format!("{}: {e}", song.song_id)),
            None => {}
        }
    }
    write_songs(out, &records)?;
    finish("translate", &failures)
}

fn infer(
    cfg: &ConfigFile,
    songs: &Path,
    remote: &Remote,
    prompt: PromptId,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    out: &Path,
) -> Result<(), CliError> {
    let records = read_songs(songs)?;
    let gw = gateway(cfg, remote)?;
    let mut run = model_run(cfg, remote, prompt)?;
    if let Some(t) = temperature {
        run = run.with_temperature(t);
    }
    if let Some(n) = max_tokens {
        run = run.with_max_tokens(n);
    }
    let template = PromptTemplate::builtin(prompt);
    let mut requests = Vec::new();
    for song in &records {
        match song.profiling_text().map(|text| render_prompt(&template, text)) {
            Some(Ok(p)) => requests.push((song.song_id.clone(), p)),
            Some(Err(e)) => log::warn!("{}: {e}", song.song_id),
            None => log::warn!("{}: no lyrics, skipped", song.song_id),
        }
    }
    let results = gw.complete_batch(&run, &requests).map_err(|e| CliError::stage("infer", e))?;
    let mut preds = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in &results {
        match result {
            Ok(c) => preds.push(parse_response(id, &run.model_id, prompt, &c.text, run.decoding.temperature)),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    write_predictions(out, &preds)?;
    finish("infer", &failures)
}

fn parse(predictions: &Path, out: &Path) -> Result<(), CliError> {
    let mut preds = read_predictions(predictions)?;
    for p in preds.iter_mut() {
        parse_into(p);
    }
    let valid = preds.iter().filter(|p| p.valid).count();
    write_predictions(out, &preds)?;
    eprintln!("{valid} of {} responses parsed to valid labels", preds.len());
    Ok(())
}

fn metrics(
    cfg: &ConfigFile,
    songs: &[SongRecord],
    preds: &[PredictionRecord],
    cell: &Cell,
    r: &Resampling,
    balanced: bool,
    out: &Path,
) -> Result<(), CliError> {
    out_dir(out)?;
    let (mut rows, mut dist, mut failures) = (Vec::new(), Vec::new(), Vec::new());
    for attribute in attributes(cell.attribute) {
        let plan = plan(cfg, r, attribute)?;
        let songs = if balanced {
            balanced_songs(songs, attribute, cfg.require(r.seed, "seed", "--seed")?)?
        } else {
            songs.to_vec()
        };
        for (model, prompt) in selected_cells(preds, cell) {
            let key = CellKey::new(&model, prompt, attribute);
            let pairs = cell_pairs(&songs, preds, attribute, &model, prompt);
            match metric_rows(&key, attribute.schema(), &pairs, plan.as_ref()) {
                Ok(r) => rows.extend(r),
                Err(e) => failures.push(format!("{model}/{prompt}/{attribute}: {e}")),
            }
            let slice = EvaluationSlice::from_records(&songs, preds, attribute, &model, prompt);
            if let Ok(d) = distribution_rows(&key, &slice) {
                dist.extend(d);
            }
        }
    }
    write_file(&out.join("metrics.tsv"), &metrics_tsv(&rows))?;
    write_file(&out.join("metrics.json"), &to_json(&rows).map_err(|e| CliError::stage("metrics", e))?)?;
    write_file(&out.join("distributions.tsv"), &distributions_tsv(&dist))?;
    finish("metrics", &failures)
}

#[allow(clippy::too_many_arguments)]
fn tests(
    cfg: &ConfigFile,
    songs: &[SongRecord],
    preds: &[PredictionRecord],
    cell: &Cell,
    r: &Resampling,
    alpha: Option<f64>,
    balanced: bool,
    out: &Path,
) -> Result<(), CliError> {
    out_dir(out)?;
    let alpha = alpha_value(cfg, alpha)?;
    let (mut rows, mut failures) = (Vec::new(), Vec::new());
    for attribute in attributes(cell.attribute) {
        let plan = required_plan(cfg, r, attribute)?;
        let songs = if balanced {
            balanced_songs(songs, attribute, plan.seed)?
        } else {
            songs.to_vec()
        };
        for (model, prompt) in selected_cells(preds, cell) {
            let slice = EvaluationSlice::from_records(&songs, preds, attribute, &model, prompt);
            match run_battery(&slice.pred_counts(), &plan, alpha, DEFAULT_MIN_CLT_N) {
                Ok(report) => rows.push(TestRow {
                    key: CellKey::new(&model, prompt, attribute),
                    report,
                }),
                Err(e) => failures.push(format!("{model}/{prompt}/{attribute}: {e}")),
            }
        }
    }
    write_file(&out.join("tests.tsv"), &tests_tsv(&rows))?;
    write_file(&out.join("tests.json"), &to_json(&rows).map_err(|e| CliError::stage("tests", e))?)?;
    finish("tests", &failures)
}

fn correlate(
    cfg: &ConfigFile,
    songs: &[SongRecord],
    preds: &[PredictionRecord],
    cell: &Cell,
    r: &Resampling,
    out: &Path,
) -> Result<(), CliError> {
    out_dir(out)?;
    let models: std::collections::BTreeSet<&str> = preds
        .iter()
        .filter(|p| p.prompt_id.is_well_informed())
        .map(|p| p.model_id.as_str())
        .filter(|m| cell.model.as_deref().is_none_or(|want| want == *m))
        .collect();
    if models.is_empty() {
        return Err(CliError::stage("correlate", "no well-informed predictions to correlate"));
    }
    let (mut rows, mut failures) = (Vec::new(), Vec::new());
    for attribute in attributes(cell.attribute) {
        let plan = required_plan(cfg, r, attribute)?;
        for model in &models {
            let scored = scored_rows(songs, preds, attribute, Some(model));
            match correlation_matrix(&scored, &plan) {
                Ok(cells) => rows.extend(cells.into_iter().map(|cell| CorrelationRow {
                    model: model.to_string(),
                    cell,
                })),
                Err(e) => failures.push(format!("{model}/{attribute}: {e}")),
            }
        }
    }
    write_file(&out.join("correlations.tsv"), &correlations_tsv(&rows))?;
    write_file(&out.join("correlations.json"), &to_json(&rows).map_err(|e| CliError::stage("correlate", e))?)?;
    finish("correlate", &failures)
}

fn rationales(
    cfg: &ConfigFile,
    songs: &[SongRecord],
    preds: &[PredictionRecord],
    cell: &Cell,
    r: &Resampling,
    out: &Path,
) -> Result<(), CliError> {
    out_dir(out)?;
    let stopwords = english_stopwords();
    let (mut buckets, mut failures) = (Vec::new(), Vec::new());
    for attribute in attributes(cell.attribute) {
        let plan = required_plan(cfg, r, attribute)?;
        for (model, prompt) in selected_cells(preds, cell) {
            let records = reasoned_records(songs, preds, attribute, &model, prompt);
            if !records.is_empty() {
                for (k, name) in attribute.schema().modalities().iter().enumerate() {
                    match term_divergence(&records, k, stopwords) {
                        Ok(terms) => {
                            let stem = file_stem(&["terms", &model, prompt.as_str(), attribute.as_str(), name]);
                            write_file(&out.join(format!("{stem}.tsv")), &terms_tsv(&terms))?;
                        }
                        Err(RationaleError::NoWrongReasonings { .. }) => {
                            log::warn!("{model}/{prompt}/{attribute}: no wrong reasonings for {name}");
                        }
                        Err(e) => failures.push(format!("{model}/{prompt}/{attribute}/{name}: {e}")),
                    }
                }
            }
            for (label, bucketing) in [
                ("word_count", Bucketing::default()),
                ("genre", Bucketing::Genre),
                ("translated", Bucketing::Translated),
            ] {
                match accuracy_by_bucket(songs, preds, attribute, &model, prompt, bucketing, &plan) {
                    Ok(rows) => buckets.extend(rows.into_iter().map(|row| BucketRow {
                        key: CellKey::new(&model, prompt, attribute),
                        bucketing: label.to_string(),
                        row,
                    })),
                    Err(e) => failures.push(format!("{model}/{prompt}/{attribute}/{label}: {e}")),
                }
            }
        }
    }
    write_file(&out.join("buckets.tsv"), &buckets_tsv(&buckets))?;
    finish("rationales", &failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_stems_are_path_safe() {
        assert_eq!(file_stem(&["terms", "org/Model 7B", "North America"]), "terms__org_Model_7B__North_America");
    }
}
