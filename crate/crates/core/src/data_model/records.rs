use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Attribute, DataError, LabelSchema};

/// Where a lyric was collected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Spotify,
    Deezer,
}

impl FromStr for Source {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "spotify" => Ok(Source::Spotify),
            "deezer" => Ok(Source::Deezer),
            other => Err(DataError::Field {
                field: "source",
                message: format!("unknown source `{other}`"),
            }),
        }
    }
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Spotify => "spotify",
            Source::Deezer => "deezer",
        }
    }
}

/// One lyric with its provenance and ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SongRecord {
    pub song_id: String,
    pub artist_id: String,
    pub title: String,
    pub source: Source,
    pub lyrics: Option<String>,
    pub translated_lyrics: Option<String>,
    pub needs_translation: bool,
    /// Index into [`LabelSchema::gender`].
    pub true_gender: usize,
    /// Index into [`LabelSchema::region`].
    pub true_region: usize,
    pub genre: Option<String>,
    pub word_count: u32,
}

/// Whitespace-token count used for `word_count`.
pub fn count_words(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

impl SongRecord {
    pub fn truth(&self, attribute: Attribute) -> usize {
        match attribute {
            Attribute::Gender => self.true_gender,
            Attribute::Ethnicity => self.true_region,
        }
    }

    /// Text to send to a profiling model: the translation when one exists.
    pub fn profiling_text(&self) -> Option<&str> {
        self.translated_lyrics
            .as_deref()
            .or(self.lyrics.as_deref())
            .filter(|t| !t.trim().is_empty())
    }

    pub(crate) fn check(&self) -> Result<(), DataError> {
        if self.true_gender >= LabelSchema::gender().len() {
            return Err(DataError::Field {
                field: "true_gender",
                message: format!("index {} out of range", self.true_gender),
            });
        }
        if self.true_region >= LabelSchema::region().len() {
            return Err(DataError::Field {
                field: "true_region",
                message: format!("index {} out of range", self.true_region),
            });
        }
        if let Some(lyrics) = &self.lyrics {
            let n = count_words(lyrics);
            if n != self.word_count {
                return Err(DataError::Field {
                    field: "word_count",
                    message: format!("{} does not match the {} words in lyrics", self.word_count, n),
                });
            }
        }
        Ok(())
    }
}

/// The prompt family an inference was run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    Regular,
    Informed,
    InformedExpressive,
    WellInformedAttrFirst,
    WellInformedReasonFirst,
    Corrected,
}

impl PromptId {
    pub const ALL: [PromptId; 6] = [
        PromptId::Regular,
        PromptId::Informed,
        PromptId::InformedExpressive,
        PromptId::WellInformedAttrFirst,
        PromptId::WellInformedReasonFirst,
        PromptId::Corrected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::Regular => "regular",
            PromptId::Informed => "informed",
            PromptId::InformedExpressive => "informed_expressive",
            PromptId::WellInformedAttrFirst => "well_informed_attr_first",
            PromptId::WellInformedReasonFirst => "well_informed_reason_first",
            PromptId::Corrected => "corrected",
        }
    }

    pub fn is_well_informed(self) -> bool {
        matches!(
            self,
            PromptId::WellInformedAttrFirst | PromptId::WellInformedReasonFirst
        )
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace(['-', ' '], "_");
        PromptId::ALL
            .into_iter()
            .find(|p| p.as_str() == key)
            .ok_or_else(|| DataError::Field {
                field: "prompt_id",
                message: format!("unknown prompt `{s}`"),
            })
    }
}

/// Names of the twenty socio-linguistic scores, in prompt order.
pub const ATTRIBUTE_NAMES: [&str; 20] = [
    "emotions",
    "romance_topics",
    "party_club",
    "violence",
    "politics_religion",
    "success_money",
    "family",
    "slang_usage",
    "formal_language",
    "profanity",
    "intensifiers",
    "hedges",
    "first_person",
    "second_person",
    "third_person",
    "confidence",
    "doubt_uncertainty",
    "politeness",
    "aggression_toxicity",
    "cultural_references",
];

/// The twenty integer scores (1..=10) requested by the well-informed prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AttributeScoreVector([u8; 20]);

impl AttributeScoreVector {
    /// Validate a name → value map. All twenty keys must be present, no other
    /// keys are allowed, and every value must be an integer in 1..=10.
    pub fn from_map(map: &BTreeMap<String, i64>) -> Result<Self, DataError> {
        let mut scores = [0u8; 20];
        for (slot, name) in scores.iter_mut().zip(ATTRIBUTE_NAMES) {
            let value = *map.get(name).ok_or_else(|| DataError::Field {
                field: "attribute_scores",
                message: format!("missing score `{name}`"),
            })?;
            if !(1..=10).contains(&value) {
                return Err(DataError::Field {
                    field: "attribute_scores",
                    message: format!("score out of range: {name}={value}"),
                });
            }
            *slot = value as u8;
        }
        if let Some(extra) = map.keys().find(|k| !ATTRIBUTE_NAMES.contains(&k.as_str())) {
            return Err(DataError::Field {
                field: "attribute_scores",
                message: format!("unexpected score `{extra}`"),
            });
        }
        Ok(Self(scores))
    }

    pub fn get(&self, name: &str) -> Option<u8> {
        ATTRIBUTE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }

    pub fn values(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, u8)> + '_ {
        ATTRIBUTE_NAMES.iter().copied().zip(self.0.iter().copied())
    }

    pub fn to_map(&self) -> BTreeMap<String, i64> {
        self.iter().map(|(k, v)| (k.to_string(), v as i64)).collect()
    }
}

impl Serialize for AttributeScoreVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(20))?;
        for (k, v) in self.iter() {
            map.serialize_entry(k, &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for AttributeScoreVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, i64>::deserialize(deserializer)?;
        AttributeScoreVector::from_map(&map).map_err(serde::de::Error::custom)
    }
}

/// One (song, model, prompt) inference and what was parsed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub song_id: String,
    pub model_id: String,
    pub prompt_id: PromptId,
    pub raw_response: String,
    pub pred_gender: Option<usize>,
    pub pred_region: Option<usize>,
    pub gender_keywords: Option<Vec<String>>,
    pub region_keywords: Option<Vec<String>>,
    pub gender_reasoning: Option<String>,
    pub region_reasoning: Option<String>,
    pub attribute_scores: Option<AttributeScoreVector>,
    /// Both labels parsed to modalities. `Unknown` regions leave this false.
    pub valid: bool,
    pub temperature: f64,
    /// Non-fatal parse findings, e.g. a rejected score vector.
    pub parse_issues: Vec<String>,
}

impl PredictionRecord {
    /// A record with only identity fields and the raw text set.
    pub fn unparsed(
        song_id: impl Into<String>,
        model_id: impl Into<String>,
        prompt_id: PromptId,
        raw_response: impl Into<String>,
        temperature: f64,
    ) -> Self {
        Self {
            song_id: song_id.into(),
            model_id: model_id.into(),
            prompt_id,
            raw_response: raw_response.into(),
            pred_gender: None,
            pred_region: None,
            gender_keywords: None,
            region_keywords: None,
            gender_reasoning: None,
            region_reasoning: None,
            attribute_scores: None,
            valid: false,
            temperature,
            parse_issues: Vec::new(),
        }
    }

    pub fn key(&self) -> (&str, &str, PromptId) {
        (&self.song_id, &self.model_id, self.prompt_id)
    }

    pub fn predicted(&self, attribute: Attribute) -> Option<usize> {
        match attribute {
            Attribute::Gender => self.pred_gender,
            Attribute::Ethnicity => self.pred_region,
        }
    }

    pub fn reasoning(&self, attribute: Attribute) -> Option<&str> {
        match attribute {
            Attribute::Gender => self.gender_reasoning.as_deref(),
            Attribute::Ethnicity => self.region_reasoning.as_deref(),
        }
    }

    pub fn refresh_validity(&mut self) {
        self.valid = self.pred_gender.is_some() && self.pred_region.is_some();
    }
}

/// Decoding settings for one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

/// The classifier under audit: a served model queried with one prompt family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model_id: String,
    pub prompt_id: PromptId,
    /// Base URL of the chat-completions endpoint.
    pub endpoint: String,
    pub decoding: Decoding,
}

impl ModelRun {
    /// Built-in configuration: temperature 0.7 for the expressive and
    /// well-informed prompts, 0.0 otherwise.
    pub fn new(model_id: impl Into<String>, prompt_id: PromptId, endpoint: impl Into<String>) -> Self {
        let temperature = match prompt_id {
            PromptId::InformedExpressive
            | PromptId::WellInformedAttrFirst
            | PromptId::WellInformedReasonFirst => 0.7,
            _ => 0.0,
        };
        Self {
            model_id: model_id.into(),
            prompt_id,
            endpoint: endpoint.into(),
            decoding: Decoding {
                temperature,
                max_tokens: 1024,
                seed: None,
            },
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.decoding.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.decoding.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.decoding.seed = Some(seed);
        self
    }
}
