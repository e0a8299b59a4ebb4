//! CSV / JSON-lines ingest and export.
//!
//! Both formats go through an ordered field map: CSV cells become strings,
//! JSON-lines values are kept as-is. List and score fields stored in CSV are
//! JSON-encoded inside the cell.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::records::count_words;
use super::{
    AttributeScoreVector, DataError, LabelSchema, PredictionRecord, PromptId, SongRecord, Source,
};

type RawRow = Map<String, Value>;

const SONG_FIELDS: [&str; 11] = [
    "song_id",
    "artist_id",
    "title",
    "source",
    "lyrics",
    "translated_lyrics",
    "needs_translation",
    "true_gender",
    "true_region",
    "genre",
    "word_count",
];

const PREDICTION_FIELDS: [&str; 14] = [
    "song_id",
    "model_id",
    "prompt_id",
    "raw_response",
    "pred_gender",
    "pred_region",
    "gender_keywords",
    "region_keywords",
    "gender_reasoning",
    "region_reasoning",
    "attribute_scores",
    "valid",
    "temperature",
    "parse_issues",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from the file extension; anything that is not `.csv` is JSON-lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Format::Csv => "CSV",
            Format::Jsonl => "JSON-lines",
        }
    }
}

impl FromStr for Format {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(Format::Jsonl),
            other => Err(DataError::Config(format!("unknown format `{other}`"))),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_rows(path: &Path, format: Format) -> Result<Vec<(usize, RawRow)>, DataError> {
    let display = path.display().to_string();
    let malformed = |row: usize, message: String| DataError::Malformed {
        path: display.clone(),
        row,
        format: format.name(),
        message,
    };
    let mut rows = Vec::new();
    match format {
        Format::Csv => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(e) => return Err(malformed(1, e.to_string())),
            };
            for result in reader.records() {
                let record = result.map_err(|e| {
                    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    malformed(row, e.to_string())
                })?;
                let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let mut map = Map::new();
                for (name, cell) in headers.iter().zip(record.iter()) {
                    if !cell.is_empty() {
                        map.insert(name.trim().to_string(), Value::String(cell.to_string()));
                    }
                }
                rows.push((row, map));
            }
        }
        Format::Jsonl => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| io_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(&line) {
                    Ok(Value::Object(map)) => rows.push((i + 1, map)),
                    Ok(_) => return Err(malformed(i + 1, "expected a JSON object".into())),
                    Err(e) => return Err(malformed(i + 1, e.to_string())),
                }
            }
        }
    }
    Ok(rows)
}

fn field_err(field: &'static str, message: impl Into<String>) -> DataError {
    DataError::Field {
        field,
        message: message.into(),
    }
}

struct RowView<'a>(&'a RawRow);

impl RowView<'_> {
    fn value(&self, field: &str) -> Option<&Value> {
        match self.0.get(field) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(v) => Some(v),
        }
    }

    fn opt_text(&self, field: &'static str) -> Result<Option<String>, DataError> {
        match self.value(field) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(other) => Err(field_err(field, format!("expected text, got {other}"))),
        }
    }

    fn text(&self, field: &'static str) -> Result<String, DataError> {
        self.opt_text(field)?
            .ok_or_else(|| field_err(field, "missing required field"))
    }

    fn opt_bool(&self, field: &'static str) -> Result<Option<bool>, DataError> {
        match self.value(field) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(Value::String(s)) => match s.trim().to_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(Some(true)),
                "false" | "0" | "no" => Ok(Some(false)),
                other => Err(field_err(field, format!("expected a boolean, got `{other}`"))),
            },
            Some(Value::Number(n)) => Ok(Some(n.as_f64() != Some(0.0))),
            Some(other) => Err(field_err(field, format!("expected a boolean, got {other}"))),
        }
    }

    fn opt_f64(&self, field: &'static str) -> Result<Option<f64>, DataError> {
        match self.value(field) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| field_err(field, format!("expected a number, got `{s}`"))),
            Some(other) => Err(field_err(field, format!("expected a number, got {other}"))),
        }
    }

    fn opt_u32(&self, field: &'static str) -> Result<Option<u32>, DataError> {
        match self.opt_f64(field)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(Some(x as u32)),
            Some(x) => Err(field_err(field, format!("expected a nonnegative integer, got {x}"))),
        }
    }

    fn opt_list(&self, field: &'static str) -> Result<Option<Vec<String>>, DataError> {
        let to_strings = |items: &Vec<Value>| -> Result<Vec<String>, DataError> {
            items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(field_err(field, format!("expected strings, got {other}"))),
                })
                .collect()
        };
        match self.value(field) {
            None => Ok(None),
            Some(Value::Array(items)) => to_strings(items).map(Some),
            Some(Value::String(s)) if s.trim_start().starts_with('[') => {
                match serde_json::from_str::<Value>(s) {
                    Ok(Value::Array(items)) => to_strings(&items).map(Some),
                    _ => Err(field_err(field, format!("malformed list `{s}`"))),
                }
            }
            Some(Value::String(s)) => Ok(Some(
                s.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(String::from)
                    .collect(),
            )),
            Some(other) => Err(field_err(field, format!("expected a list, got {other}"))),
        }
    }

    fn opt_scores(&self, field: &'static str) -> Result<Option<AttributeScoreVector>, DataError> {
        let value = match self.value(field) {
            None => return Ok(None),
            Some(Value::String(s)) => serde_json::from_str::<Value>(s)
                .map_err(|e| field_err(field, format!("malformed score object: {e}")))?,
            Some(v) => v.clone(),
        };
        let Value::Object(obj) = value else {
            return Err(field_err(field, "expected an object of scores"));
        };
        let mut map = BTreeMap::new();
        for (k, v) in obj {
            let n = v
                .as_i64()
                .ok_or_else(|| field_err(field, format!("score `{k}` is not an integer")))?;
            map.insert(k, n);
        }
        AttributeScoreVector::from_map(&map).map(Some)
    }
}

fn truth_label(view: &RowView<'_>, field: &'static str, schema: &LabelSchema) -> Result<usize, DataError> {
    let raw = view.text(field)?;
    schema.normalize(&raw).ok_or_else(|| {
        field_err(
            field,
            format!("`{raw}` is not a {} modality", schema.attribute_name()),
        )
    })
}

fn song_from_row(row: &RawRow) -> Result<SongRecord, DataError> {
    let view = RowView(row);
    let lyrics = view.opt_text("lyrics")?;
    let word_count = match (&lyrics, view.opt_u32("word_count")?) {
        (Some(l), Some(n)) => {
            let actual = count_words(l);
            if actual != n {
                return Err(field_err(
                    "word_count",
                    format!("{n} does not match the {actual} words in lyrics"),
                ));
            }
            n
        }
        (Some(l), None) => count_words(l),
        (None, Some(n)) => n,
        (None, None) => 0,
    };
    let song = SongRecord {
        song_id: view.text("song_id")?,
        artist_id: view.text("artist_id")?,
        title: view.opt_text("title")?.unwrap_or_default(),
        source: view.text("source")?.parse::<Source>()?,
        lyrics,
        translated_lyrics: view.opt_text("translated_lyrics")?,
        needs_translation: view.opt_bool("needs_translation")?.unwrap_or(false),
        true_gender: truth_label(&view, "true_gender", LabelSchema::gender())?,
        true_region: truth_label(&view, "true_region", LabelSchema::region())?,
        genre: view.opt_text("genre")?,
        word_count,
    };
    song.check()?;
    Ok(song)
}

fn opt_value<T: Into<Value>>(v: Option<T>) -> Value {
    v.map(Into::into).unwrap_or(Value::Null)
}

fn song_to_row(song: &SongRecord) -> RawRow {
    let gender = LabelSchema::gender();
    let region = LabelSchema::region();
    let mut row = Map::new();
    row.insert("song_id".into(), song.song_id.clone().into());
    row.insert("artist_id".into(), song.artist_id.clone().into());
    row.insert("title".into(), song.title.clone().into());
    row.insert("source".into(), song.source.as_str().into());
    row.insert("lyrics".into(), opt_value(song.lyrics.clone()));
    row.insert("translated_lyrics".into(), opt_value(song.translated_lyrics.clone()));
    row.insert("needs_translation".into(), song.needs_translation.into());
    row.insert("true_gender".into(), opt_value(gender.name(song.true_gender)));
    row.insert("true_region".into(), opt_value(region.name(song.true_region)));
    row.insert("genre".into(), opt_value(song.genre.clone()));
    row.insert("word_count".into(), song.word_count.into());
    row
}

fn predicted_label(view: &RowView<'_>, field: &'static str, schema: &LabelSchema) -> Result<Option<usize>, DataError> {
    Ok(view.opt_text(field)?.and_then(|raw| schema.normalize(&raw)))
}

fn prediction_from_row(row: &RawRow) -> Result<PredictionRecord, DataError> {
    let view = RowView(row);
    let mut record = PredictionRecord {
        song_id: view.text("song_id")?,
        model_id: view.text("model_id")?,
        prompt_id: view.text("prompt_id")?.parse::<PromptId>()?,
        raw_response: view.opt_text("raw_response")?.unwrap_or_default(),
        pred_gender: predicted_label(&view, "pred_gender", LabelSchema::gender())?,
        pred_region: predicted_label(&view, "pred_region", LabelSchema::region())?,
        gender_keywords: view.opt_list("gender_keywords")?,
        region_keywords: view.opt_list("region_keywords")?,
        gender_reasoning: view.opt_text("gender_reasoning")?,
        region_reasoning: view.opt_text("region_reasoning")?,
        attribute_scores: view.opt_scores("attribute_scores")?,
        valid: false,
        temperature: view.opt_f64("temperature")?.unwrap_or(0.0),
        parse_issues: view.opt_list("parse_issues")?.unwrap_or_default(),
    };
    record.refresh_validity();
    Ok(record)
}

fn prediction_to_row(p: &PredictionRecord) -> RawRow {
    let gender = LabelSchema::gender();
    let region = LabelSchema::region();
    let list = |l: &Option<Vec<String>>| opt_value(l.clone());
    let mut row = Map::new();
    row.insert("song_id".into(), p.song_id.clone().into());
    row.insert("model_id".into(), p.model_id.clone().into());
    row.insert("prompt_id".into(), p.prompt_id.as_str().into());
    row.insert("raw_response".into(), p.raw_response.clone().into());
    row.insert("pred_gender".into(), opt_value(p.pred_gender.and_then(|i| gender.name(i))));
    row.insert("pred_region".into(), opt_value(p.pred_region.and_then(|i| region.name(i))));
    row.insert("gender_keywords".into(), list(&p.gender_keywords));
    row.insert("region_keywords".into(), list(&p.region_keywords));
    row.insert("gender_reasoning".into(), opt_value(p.gender_reasoning.clone()));
    row.insert("region_reasoning".into(), opt_value(p.region_reasoning.clone()));
    row.insert(
        "attribute_scores".into(),
        p.attribute_scores
            .map(|s| serde_json::to_value(s).expect("scores serialize"))
            .unwrap_or(Value::Null),
    );
    row.insert("valid".into(), p.valid.into());
    row.insert("temperature".into(), p.temperature.into());
    row.insert("parse_issues".into(), p.parse_issues.clone().into());
    row
}

fn convert_rows<T>(
    path: &Path,
    rows: Vec<(usize, RawRow)>,
    convert: impl Fn(&RawRow) -> Result<T, DataError>,
) -> Result<Vec<(usize, T)>, DataError> {
    rows.into_iter()
        .map(|(row, raw)| {
            convert(&raw)
                .map(|t| (row, t))
                .map_err(|e| DataError::Row {
                    path: path.display().to_string(),
                    row,
                    source: Box::new(e),
                })
        })
        .collect()
}

fn reject_duplicates<T, K: std::hash::Hash + Eq + std::fmt::Debug>(
    path: &Path,
    items: &[(usize, T)],
    key: impl Fn(&T) -> K,
) -> Result<(), DataError> {
    let mut seen: HashMap<K, usize> = HashMap::new();
    for (row, item) in items {
        if let Some(first) = seen.insert(key(item), *row) {
            return Err(DataError::Duplicate {
                path: path.display().to_string(),
                row: *row,
                first,
                key: format!("{:?}", key(item)),
            });
        }
    }
    Ok(())
}

/// Load songs. Rows whose ground-truth labels do not map onto the built-in
/// schemas are rejected with their row number; duplicate `song_id`s are an error.
pub fn load_records(path: &Path, format: Format) -> Result<Vec<SongRecord>, DataError> {
    let rows = read_rows(path, format)?;
    let songs = convert_rows(path, rows, song_from_row)?;
    reject_duplicates(path, &songs, |s| s.song_id.clone())?;
    Ok(songs.into_iter().map(|(_, s)| s).collect())
}

/// Load prediction records. Identity is `(song_id, model_id, prompt_id)`.
pub fn load_predictions(path: &Path, format: Format) -> Result<Vec<PredictionRecord>, DataError> {
    let rows = read_rows(path, format)?;
    let preds = convert_rows(path, rows, prediction_from_row)?;
    reject_duplicates(path, &preds, |p| {
        (p.song_id.clone(), p.model_id.clone(), p.prompt_id)
    })?;
    Ok(preds.into_iter().map(|(_, p)| p).collect())
}

fn render(rows: &[RawRow], fields: &[&str], format: Format) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::new();
    match format {
        Format::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut out, row).expect("in-memory JSON write");
                out.push(b'\n');
            }
        }
        Format::Csv => {
            let mut writer = csv::Writer::from_writer(&mut out);
            writer
                .write_record(fields)
                .map_err(|e| DataError::Config(e.to_string()))?;
            for row in rows {
                let cells = fields.iter().map(|f| match row.get(*f) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(other) => other.to_string(),
                });
                writer
                    .write_record(cells)
                    .map_err(|e| DataError::Config(e.to_string()))?;
            }
            writer.flush().map_err(|e| DataError::Config(e.to_string()))?;
        }
    }
    Ok(out)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn save_records(path: &Path, format: Format, songs: &[SongRecord]) -> Result<(), DataError> {
    let rows: Vec<RawRow> = songs.iter().map(song_to_row).collect();
    write_atomic(path, &render(&rows, &SONG_FIELDS, format)?)
}

pub fn save_predictions(path: &Path, format: Format, preds: &[PredictionRecord]) -> Result<(), DataError> {
    let rows: Vec<RawRow> = preds.iter().map(prediction_to_row).collect();
    write_atomic(path, &render(&rows, &PREDICTION_FIELDS, format)?)
}

/// One prediction as its JSON-lines row, without the trailing newline.
pub fn prediction_json(pred: &PredictionRecord) -> String {
    serde_json::to_string(&prediction_to_row(pred)).expect("in-memory JSON write")
}

/// Parse `key = value` lines. `#` starts a comment line; blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DataError::Config(format!("line {}: expected key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(DataError::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Renames source columns onto canonical field names and rewrites values.
///
/// File syntax, one entry per line:
///
/// ```text
/// # canonical_field = source_column
/// song_id = track_id
/// pred_region = continent_prediction
/// # value.<canonical_field>.<raw value> = <canonical value>
/// value.model_id.mistral-small-3.2 = Mistral-24B
/// value.prompt_id.Informed and Expressive = informed_expressive
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnMapping {
    columns: BTreeMap<String, String>,
    values: BTreeMap<String, BTreeMap<String, String>>,
}

impl ColumnMapping {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut mapping = ColumnMapping::default();
        for (key, value) in parse_key_values(text)? {
            if let Some(rest) = key.strip_prefix("value.") {
                let (field, raw) = rest.split_once('.').ok_or_else(|| {
                    DataError::Config(format!("`{key}`: expected value.<field>.<raw>"))
                })?;
                mapping
                    .values
                    .entry(field.to_string())
                    .or_default()
                    .insert(raw.to_string(), value);
            } else {
                mapping.columns.insert(key, value);
            }
        }
        Ok(mapping)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    fn apply(&self, mut row: RawRow) -> RawRow {
        let mut renamed = Map::new();
        for (canonical, source) in &self.columns {
            if let Some(v) = row.remove(source) {
                renamed.insert(canonical.clone(), v);
            }
        }
        for (k, v) in row {
            renamed.entry(k).or_insert(v);
        }
        for (field, table) in &self.values {
            if let Some(Value::String(s)) = renamed.get(field) {
                if let Some(canonical) = table.get(s.trim()) {
                    renamed.insert(field.clone(), Value::String(canonical.clone()));
                }
            }
        }
        renamed
    }
}

/// Songs and predictions recovered from a released results table.
#[derive(Debug, Clone, Default)]
pub struct ReleasedData {
    pub songs: Vec<SongRecord>,
    pub predictions: Vec<PredictionRecord>,
}

/// Ingest a combined results table (one row per song × model × prompt).
///
/// Song fields are taken from the first row of each `song_id`; later rows must
/// agree on the ground truth. When predicted labels are absent but
/// `raw_response` is present, the response is parsed with the prompt's format.
pub fn load_released(path: &Path, format: Format, mapping: &ColumnMapping) -> Result<ReleasedData, DataError> {
    let rows = read_rows(path, format)?;
    let mut data = ReleasedData::default();
    let mut song_rows: HashMap<String, (usize, usize)> = HashMap::new();
    let mut pred_rows: HashMap<(String, String, PromptId), usize> = HashMap::new();
    let wrap = |row: usize, e: DataError| DataError::Row {
        path: path.display().to_string(),
        row,
        source: Box::new(e),
    };
    for (row, raw) in rows {
        let raw = mapping.apply(raw);
        let song = song_from_row(&raw).map_err(|e| wrap(row, e))?;
        match song_rows.get(&song.song_id) {
            Some(&(_, idx)) => {
                let first = &data.songs[idx];
                if first.true_gender != song.true_gender || first.true_region != song.true_region {
                    return Err(wrap(
                        row,
                        field_err("song_id", format!("`{}` has conflicting ground truth", song.song_id)),
                    ));
                }
            }
            None => {
                song_rows.insert(song.song_id.clone(), (row, data.songs.len()));
                data.songs.push(song);
            }
        }
        let view = RowView(&raw);
        if view.value("model_id").is_none() {
            continue;
        }
        let mut pred = prediction_from_row(&raw).map_err(|e| wrap(row, e))?;
        let has_labels = view.value("pred_gender").is_some() || view.value("pred_region").is_some();
        if !has_labels && !pred.raw_response.is_empty() {
            crate::response_parser::parse_into(&mut pred);
        }
        let key = (pred.song_id.clone(), pred.model_id.clone(), pred.prompt_id);
        if let Some(first) = pred_rows.insert(key.clone(), row) {
            return Err(DataError::Duplicate {
                path: path.display().to_string(),
                row,
                first,
                key: format!("{key:?}"),
            });
        }
        data.predictions.push(pred);
    }
    Ok(data)
}

/// One entry per non-empty line, trimmed and lowercased.
pub fn read_word_list(path: &Path) -> Result<std::collections::HashSet<String>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const CSV_HEADER: &str = "song_id,artist_id,title,source,lyrics,true_gender,true_region,genre\n";

    #[test]
    fn three_row_csv_loads() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{CSV_HEADER}s1,a1,One,spotify,la la la,male,Europe,pop\n\
             s2,a1,Two,deezer,,female,north america,\n\
             s3,a2,Three,Spotify,hello there,Woman,Asia,rap\n"
        );
        let p = write(&dir, "songs.csv", &body);
        let songs = load_records(&p, Format::Csv).unwrap();
        assert_eq!(songs.len(), 3);
        assert_eq!(songs[0].word_count, 3);
        assert_eq!(songs[1].lyrics, None);
        assert_eq!(songs[1].true_region, 3);
        assert_eq!(songs[2].true_gender, 1);
        assert_eq!(songs[2].genre.as_deref(), Some("rap"));
    }

    #[test]
    fn band_gender_is_rejected_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{CSV_HEADER}s1,a1,One,spotify,x,male,Europe,\ns2,a2,Two,spotify,y,band,Asia,\n");
        let p = write(&dir, "songs.csv", &body);
        let err = load_records(&p, Format::Csv).unwrap_err();
        assert_eq!(err.row(), Some(3));
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("band"), "{msg}");
    }

    #[test]
    fn empty_files_are_empty_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "");
        assert!(load_records(&p, Format::Jsonl).unwrap().is_empty());
        let p = write(&dir, "e.csv", "");
        assert!(load_records(&p, Format::Csv).unwrap().is_empty());
    }

    #[test]
    fn malformed_json_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.jsonl",
            "{\"song_id\":\"s1\",\"artist_id\":\"a\",\"source\":\"deezer\",\"true_gender\":\"man\",\"true_region\":\"Asia\"}\n{oops\n",
        );
        let err = load_records(&p, Format::Jsonl).unwrap_err();
        assert_eq!(err.row(), Some(2));
    }

    #[test]
    fn duplicate_prediction_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = "{\"song_id\":\"s1\",\"model_id\":\"m\",\"prompt_id\":\"regular\",\"raw_response\":\"\"}";
        let p = write(&dir, "p.jsonl", &format!("{line}\n{line}\n"));
        let err = load_predictions(&p, Format::Jsonl).unwrap_err();
        assert!(matches!(err, DataError::Duplicate { row: 2, first: 1, .. }), "{err}");
    }

    #[test]
    fn word_count_must_match_lyrics() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.jsonl",
            "{\"song_id\":\"s1\",\"artist_id\":\"a\",\"source\":\"deezer\",\"lyrics\":\"a b\",\"word_count\":3,\"true_gender\":\"man\",\"true_region\":\"Asia\"}\n",
        );
        assert!(load_records(&p, Format::Jsonl).is_err());
    }

    #[test]
    fn mapping_renames_columns_and_values() {
        let m = ColumnMapping::parse(
            "# comment\nsong_id = track\nmodel_id = llm\nvalue.model_id.mistral-small = Mistral-24B\n",
        )
        .unwrap();
        let mut row = Map::new();
        row.insert("track".into(), "t1".into());
        row.insert("llm".into(), "mistral-small".into());
        row.insert("other".into(), 1.into());
        let out = m.apply(row);
        assert_eq!(out["song_id"], "t1");
        assert_eq!(out["model_id"], "Mistral-24B");
        assert_eq!(out["other"], 1);
        assert!(ColumnMapping::parse("novalue").is_err());
    }

    #[test]
    fn released_rows_split_into_songs_and_parsed_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let body = "id,artist,src,gender,continent,llm,prompt,output\n\
                    s1,a1,spotify,male,Europe,M,regular,\"GENDER: female\nCONTINENT: Europe\"\n\
                    s1,a1,spotify,male,Europe,M,informed,\"GENDER: male\nCONTINENT: Asia\"\n\
                    s2,a2,deezer,female,Africa,M,regular,\"nothing useful\"\n";
        let p = write(&dir, "released.csv", body);
        let mapping = ColumnMapping::parse(
            "song_id=id\nartist_id=artist\nsource=src\ntrue_gender=gender\ntrue_region=continent\nmodel_id=llm\nprompt_id=prompt\nraw_response=output\n",
        )
        .unwrap();
        let data = load_released(&p, Format::Csv, &mapping).unwrap();
        assert_eq!(data.songs.len(), 2);
        assert_eq!(data.predictions.len(), 3);
        assert_eq!(data.predictions[0].pred_gender, Some(1));
        assert!(data.predictions[0].valid);
        assert_eq!(data.predictions[1].pred_region, Some(1));
        assert!(!data.predictions[2].valid);
    }
}
