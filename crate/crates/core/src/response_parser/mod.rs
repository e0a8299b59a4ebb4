//! Turns raw completions into [`PredictionRecord`] fields.
//!
//! Only the answer region is scanned: text after the last `</think>`, or the
//! text before an unclosed `<think>`. Key lookup is case-insensitive, ignores
//! markdown emphasis around keys, and the last occurrence of a key wins.
//! Parsing never fails; problems are recorded in `parse_issues`.

mod json;

use std::collections::BTreeMap;

use serde_json::Value;

use crate::data_model::{AttributeScoreVector, LabelSchema, PredictionRecord, PromptId};

/// The portion of a response that may contain the answer.
pub fn answer_region(raw: &str) -> &str {
    if let Some(pos) = raw.rfind("</think>") {
        &raw[pos + "</think>".len()..]
    } else if let Some(pos) = raw.find("<think>") {
        &raw[..pos]
    } else {
        raw
    }
}

const KEYS: [&str; 6] = [
    "GENDER",
    "GENDER_KEYWORDS",
    "GENDER_REASONING",
    "CONTINENT",
    "CONTINENT_KEYWORDS",
    "CONTINENT_REASONING",
];

fn key_line(line: &str) -> Option<(&'static str, &str)> {
    let stripped = line.trim_start_matches(|c: char| c.is_whitespace() || "*#>-`".contains(c));
    let (head, rest) = stripped.split_once(':')?;
    let key = head
        .trim()
        .trim_matches('*')
        .trim()
        .to_uppercase()
        .replace(' ', "_");
    let key = KEYS.iter().find(|k| **k == key)?;
    Some((key, rest.trim().trim_start_matches('*').trim()))
}

/// Last value for every recognised key. Values continue over following
/// lines until the next key line or a blank line.
fn scan_keys(text: &str) -> BTreeMap<&'static str, String> {
    let mut found: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for line in text.lines() {
        if let Some((key, value)) = key_line(line) {
            found.insert(key, value.to_string());
            current = Some(key);
        } else if line.trim().is_empty() {
            current = None;
        } else if let Some(key) = current {
            let entry = found.get_mut(key).expect("current key was inserted");
            if !entry.is_empty() {
                entry.push(' ');
            }
            entry.push_str(line.trim());
        }
    }
    found
}

fn clean_value(raw: &str) -> &str {
    raw.trim()
        .trim_matches(|c: char| c == '*' || c == '"' || c == '\'' || c == '`')
        .trim_start_matches('<')
        .trim_end_matches(|c: char| c == '>' || c == '.' || c == '*')
        .trim()
}

/// Resolve a label, accepting a modality name followed by trailing prose
/// such as `North America (USA)`.
fn match_label(raw: &str, schema: &LabelSchema) -> Option<usize> {
    let value = clean_value(raw);
    if let Some(i) = schema.normalize(value) {
        return Some(i);
    }
    let folded = value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let mut best: Option<(usize, usize)> = None;
    for (alias, idx) in schema.aliases() {
        if let Some(rest) = folded.strip_prefix(alias) {
            let boundary = rest.chars().next().is_none_or(|c| !c.is_alphanumeric());
            if boundary && best.is_none_or(|(len, _)| alias.len() > len) {
                best = Some((alias.len(), idx));
            }
        }
    }
    best.map(|(_, i)| i)
}

fn label_field(
    keys: &BTreeMap<&'static str, String>,
    key: &'static str,
    schema: &LabelSchema,
    issues: &mut Vec<String>,
) -> Option<usize> {
    match keys.get(key) {
        None => {
            issues.push(format!("missing {key}"));
            None
        }
        Some(v) => {
            let label = match_label(v, schema);
            if label.is_none() {
                issues.push(format!("unrecognized {key} value `{}`", clean_value(v)));
            }
            label
        }
    }
}

fn split_keywords(raw: &str) -> Vec<String> {
    raw.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|k| k.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '*').trim())
        .filter(|k| !k.is_empty())
        .map(String::from)
        .collect()
}

/// Labels from the `GENDER:` / `CONTINENT:` format; `None` unless both parse.
pub fn parse_plain(raw: &str) -> Option<(usize, usize)> {
    let p = parse_plain_fields(raw);
    Some((p.gender?, p.region?))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlainFields {
    pub gender: Option<usize>,
    pub region: Option<usize>,
    pub issues: Vec<String>,
}

pub fn parse_plain_fields(raw: &str) -> PlainFields {
    let keys = scan_keys(answer_region(raw));
    let mut issues = Vec::new();
    let gender = label_field(&keys, "GENDER", LabelSchema::gender(), &mut issues);
    let region = label_field(&keys, "CONTINENT", LabelSchema::region(), &mut issues);
    PlainFields { gender, region, issues }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpressiveFields {
    pub gender: Option<usize>,
    pub region: Option<usize>,
    pub gender_keywords: Vec<String>,
    pub region_keywords: Vec<String>,
    pub gender_reasoning: String,
    pub region_reasoning: String,
    pub issues: Vec<String>,
}

/// The six-field informed-and-expressive format. Missing keyword or
/// reasoning fields come back empty and do not affect the labels.
pub fn parse_expressive(raw: &str) -> ExpressiveFields {
    let keys = scan_keys(answer_region(raw));
    let mut issues = Vec::new();
    let gender = label_field(&keys, "GENDER", LabelSchema::gender(), &mut issues);
    let region = label_field(&keys, "CONTINENT", LabelSchema::region(), &mut issues);
    let text = |k: &str| keys.get(k).cloned().unwrap_or_default();
    ExpressiveFields {
        gender,
        region,
        gender_keywords: split_keywords(&text("GENDER_KEYWORDS")),
        region_keywords: split_keywords(&text("CONTINENT_KEYWORDS")),
        gender_reasoning: text("GENDER_REASONING"),
        region_reasoning: text("CONTINENT_REASONING"),
        issues,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WellInformedFields {
    pub gender: Option<usize>,
    pub region: Option<usize>,
    pub scores: Option<AttributeScoreVector>,
    pub reasoning: Option<String>,
    pub issues: Vec<String>,
}

fn json_label(obj: &serde_json::Map<String, Value>, key: &str, schema: &LabelSchema, issues: &mut Vec<String>) -> Option<usize> {
    match obj.get(key) {
        Some(Value::String(s)) => {
            let label = schema.normalize(s);
            if label.is_none() {
                if schema.is_sentinel(s) {
                    issues.push(format!("{key} is `{}`", s.trim()));
                } else {
                    issues.push(format!("unrecognized {key} value `{}`", s.trim()));
                }
            }
            label
        }
        Some(other) => {
            issues.push(format!("{key} is not a string: {other}"));
            None
        }
        None => {
            issues.push(format!("missing {key}"));
            None
        }
    }
}

fn json_scores(obj: &serde_json::Map<String, Value>, issues: &mut Vec<String>) -> Option<AttributeScoreVector> {
    let Some(value) = obj.get("attribute_scores") else {
        issues.push("missing attribute_scores".into());
        return None;
    };
    let Value::Object(scores) = value else {
        issues.push("attribute_scores is not an object".into());
        return None;
    };
    let mut map = BTreeMap::new();
    for (k, v) in scores {
        match v.as_i64() {
            Some(n) => {
                map.insert(k.trim().to_lowercase(), n);
            }
            None => {
                issues.push(format!("score `{k}` is not an integer: {v}"));
                return None;
            }
        }
    }
    match AttributeScoreVector::from_map(&map) {
        Ok(v) => Some(v),
        Err(e) => {
            let msg = match e {
                crate::data_model::DataError::Field { message, .. } => message,
                other => other.to_string(),
            };
            issues.push(msg);
            None
        }
    }
}

/// The JSON format of the two well-informed prompts. The last complete JSON
/// object in the answer region is used. Invalid scores drop the score vector
/// but keep the labels; no clamping is done.
pub fn parse_well_informed(raw: &str) -> WellInformedFields {
    let mut out = WellInformedFields::default();
    let objects = json::objects(answer_region(raw));
    if objects.len() > 1 {
        log::warn!("response holds {} JSON objects; using the last", objects.len());
    }
    let Some(obj) = objects.into_iter().next_back() else {
        out.issues.push("no JSON object found".into());
        return out;
    };
    out.gender = json_label(&obj, "artist_gender", LabelSchema::gender(), &mut out.issues);
    out.region = json_label(&obj, "artist_region", LabelSchema::region(), &mut out.issues);
    out.scores = json_scores(&obj, &mut out.issues);
    out.reasoning = ["reasoning", "reasoning_steps"]
        .iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str))
        .map(String::from);
    out
}

/// Fill the parsed fields of `record` from its `raw_response`, using the
/// format of its prompt. Previously parsed fields are cleared first.
pub fn parse_into(record: &mut PredictionRecord) {
    record.pred_gender = None;
    record.pred_region = None;
    record.gender_keywords = None;
    record.region_keywords = None;
    record.gender_reasoning = None;
    record.region_reasoning = None;
    record.attribute_scores = None;
    record.parse_issues.clear();
    match record.prompt_id {
        PromptId::Regular | PromptId::Informed | PromptId::Corrected => {
            let p = parse_plain_fields(&record.raw_response);
            record.pred_gender = p.gender;
            record.pred_region = p.region;
            record.parse_issues = p.issues;
        }
        PromptId::InformedExpressive => {
            let p = parse_expressive(&record.raw_response);
            record.pred_gender = p.gender;
            record.pred_region = p.region;
            record.gender_keywords = Some(p.gender_keywords);
            record.region_keywords = Some(p.region_keywords);
            record.gender_reasoning = Some(p.gender_reasoning);
            record.region_reasoning = Some(p.region_reasoning);
            record.parse_issues = p.issues;
        }
        PromptId::WellInformedAttrFirst | PromptId::WellInformedReasonFirst => {
            let p = parse_well_informed(&record.raw_response);
            record.pred_gender = p.gender;
            record.pred_region = p.region;
            record.attribute_scores = p.scores;
            record.gender_reasoning = p.reasoning.clone();
            record.region_reasoning = p.reasoning;
            record.parse_issues = p.issues;
        }
    }
    record.refresh_validity();
}

/// Parse a completion into a new record.
pub fn parse_response(
    song_id: &str,
    model_id: &str,
    prompt_id: PromptId,
    raw: &str,
    temperature: f64,
) -> PredictionRecord {
    let mut record = PredictionRecord::unparsed(song_id, model_id, prompt_id, raw, temperature);
    parse_into(&mut record);
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region(name: &str) -> Option<usize> {
        LabelSchema::region().index_of(name)
    }

    #[test]
    fn plain_basic_and_normalized() {
        assert_eq!(parse_plain("GENDER: male\nCONTINENT: Europe"), Some((0, region("Europe").unwrap())));
        assert_eq!(
            parse_plain("Let me think about the lyrics.\nGENDER: Female\nCONTINENT: north america"),
            Some((1, region("North America").unwrap()))
        );
        assert_eq!(parse_plain("GENDER: unsure"), None);
    }

    #[test]
    fn markdown_keys_and_trailing_prose() {
        let raw = "**GENDER:** Male\n**Continent**: North America (likely the US).";
        assert_eq!(parse_plain(raw), Some((0, region("North America").unwrap())));
    }

    #[test]
    fn think_region_is_skipped() {
        let raw = "<think>GENDER: female\nCONTINENT: Asia</think>\nGENDER: male\nCONTINENT: Africa";
        assert_eq!(parse_plain(raw), Some((0, region("Africa").unwrap())));
        let unclosed = "GENDER: male\nCONTINENT: Oceania\n<think>GENDER: female";
        assert_eq!(parse_plain(unclosed), Some((0, region("Oceania").unwrap())));
        assert_eq!(parse_plain("<think>GENDER: male\nCONTINENT: Asia</think>"), None);
    }

    #[test]
    fn expressive_partial_compliance() {
        let p = parse_expressive("GENDER: female\nCONTINENT: Europe\n");
        assert_eq!((p.gender, p.region), (Some(1), region("Europe")));
        assert!(p.gender_keywords.is_empty() && p.gender_reasoning.is_empty());
    }

    #[test]
    fn expressive_multiline_values() {
        let raw = "GENDER: male\nGENDER_KEYWORDS: \"my girl\", baby,\n  homie\nGENDER_REASONING: The narrator\n  addresses a girlfriend.\nCONTINENT: Africa\nCONTINENT_KEYWORDS: [Soweto, township]\nCONTINENT_REASONING: Place names.";
        let p = parse_expressive(raw);
        assert_eq!(p.gender_keywords, vec!["my girl", "baby", "homie"]);
        assert_eq!(p.gender_reasoning, "The narrator addresses a girlfriend.");
        assert_eq!(p.region_keywords, vec!["Soweto", "township"]);
        assert_eq!(p.region_reasoning, "Place names.");
    }

    #[test]
    fn well_informed_issues() {
        let p = parse_well_informed("{\"artist_gender\": \"Female\", \"artist_region\": \"Unknown\"}");
        assert_eq!(p.gender, Some(1));
        assert_eq!(p.region, None);
        assert!(p.issues.iter().any(|i| i.contains("Unknown")));
        let p = parse_well_informed("no json here");
        assert_eq!(p.issues, vec!["no JSON object found"]);
    }

    #[test]
    fn parse_into_resets_and_validates() {
        let mut r = PredictionRecord::unparsed("s", "m", PromptId::Regular, "GENDER: male\nCONTINENT: Asia", 0.0);
        parse_into(&mut r);
        assert!(r.valid);
        r.raw_response = "nothing".into();
        parse_into(&mut r);
        assert!(!r.valid);
        assert_eq!(r.pred_gender, None);
        assert_eq!(r.parse_issues, vec!["missing GENDER", "missing CONTINENT"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn parsing_is_total(raw in "\\PC{0,200}") {
            for p in PromptId::ALL {
                let _ = parse_response("s", "m", p, &raw, 0.0);
            }
        }

        #[test]
        fn later_block_overrides_earlier(g1 in 0usize..2, r1 in 0usize..6, g2 in 0usize..2, r2 in 0usize..6) {
            let gs = LabelSchema::gender();
            let rs = LabelSchema::region();
            let block = |g: usize, r: usize| format!("GENDER: {}\nCONTINENT: {}\n", gs.name(g).unwrap(), rs.name(r).unwrap());
            let raw = format!("{}\n{}", block(g1, r1), block(g2, r2));
            prop_assert_eq!(parse_plain(&raw), Some((g2, r2)));
        }
    }
}
