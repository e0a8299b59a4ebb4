use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::DataError;

/// A sensitive attribute: its ordered modalities plus alias normalization.
///
/// Lookups fold case and surrounding whitespace, and collapse runs of inner
/// whitespace, so `"  north   America "` resolves like `"North America"`.
/// Sentinels (such as `"Unknown"` for regions) are recognised labels that do
/// not map to any modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    attribute_name: String,
    modalities: Vec<String>,
    aliases: BTreeMap<String, usize>,
    sentinels: Vec<String>,
}

fn fold(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl LabelSchema {
    pub fn new<S: Into<String>>(
        attribute_name: impl Into<String>,
        modalities: impl IntoIterator<Item = S>,
    ) -> Result<Self, DataError> {
        let attribute_name = attribute_name.into();
        let modalities: Vec<String> = modalities.into_iter().map(Into::into).collect();
        if modalities.len() < 2 {
            return Err(DataError::Schema(format!(
                "attribute `{attribute_name}` needs at least two modalities, got {}",
                modalities.len()
            )));
        }
        let mut aliases = BTreeMap::new();
        for (idx, name) in modalities.iter().enumerate() {
            let key = fold(name);
            if key.is_empty() {
                return Err(DataError::Schema(format!(
                    "attribute `{attribute_name}` has an empty modality name"
                )));
            }
            if aliases.insert(key, idx).is_some() {
                return Err(DataError::Schema(format!(
                    "attribute `{attribute_name}` lists modality `{name}` twice"
                )));
            }
        }
        Ok(Self {
            attribute_name,
            modalities,
            aliases,
            sentinels: Vec::new(),
        })
    }

    /// Register an alternative spelling for modality `index`.
    pub fn with_alias(mut self, raw: &str, index: usize) -> Result<Self, DataError> {
        if index >= self.modalities.len() {
            return Err(DataError::Schema(format!(
                "alias `{raw}` points at modality {index}, but `{}` has only {}",
                self.attribute_name,
                self.modalities.len()
            )));
        }
        let key = fold(raw);
        match self.aliases.get(&key) {
            Some(&existing) if existing != index => Err(DataError::Schema(format!(
                "alias `{raw}` already maps to `{}`",
                self.modalities[existing]
            ))),
            _ => {
                self.aliases.insert(key, index);
                Ok(self)
            }
        }
    }

    /// Register a label that is recognised but is not a modality.
    pub fn with_sentinel(mut self, raw: &str) -> Self {
        self.sentinels.push(raw.to_string());
        self
    }

    /// Built-in gender schema: `man`, `woman`, with `male`/`female` aliases.
    pub fn gender() -> &'static LabelSchema {
        static GENDER: OnceLock<LabelSchema> = OnceLock::new();
        GENDER.get_or_init(|| {
            LabelSchema::new("gender", ["man", "woman"])
                .and_then(|s| s.with_alias("male", 0))
                .and_then(|s| s.with_alias("female", 1))
                .expect("built-in gender schema is well formed")
        })
    }

    /// Built-in macro-region ("ethnicity") schema with the `Unknown` sentinel.
    pub fn region() -> &'static LabelSchema {
        static REGION: OnceLock<LabelSchema> = OnceLock::new();
        REGION.get_or_init(|| {
            LabelSchema::new(
                "ethnicity",
                [
                    "Africa",
                    "Asia",
                    "Europe",
                    "North America",
                    "Oceania",
                    "South America",
                ],
            )
            .expect("built-in region schema is well formed")
            .with_sentinel("Unknown")
        })
    }

    pub fn attribute_name(&self) -> &str {
        &self.attribute_name
    }

    pub fn modalities(&self) -> &[String] {
        &self.modalities
    }

    /// Number of modalities (K).
    pub fn len(&self) -> usize {
        self.modalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modalities.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.modalities.get(index).map(String::as_str)
    }

    pub fn index_of(&self, canonical: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m == canonical)
    }

    /// Every accepted spelling (case-folded) with its modality index.
    pub fn aliases(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.aliases.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_sentinel(&self, raw: &str) -> bool {
        let key = fold(raw);
        self.sentinels.iter().any(|s| fold(s) == key)
    }

    /// Resolve a raw label to a modality index. Absence is a value, not an error.
    pub fn normalize(&self, raw: &str) -> Option<usize> {
        self.aliases.get(&fold(raw)).copied()
    }
}

/// Free-function form of [`LabelSchema::normalize`].
pub fn normalize_label(raw: &str, schema: &LabelSchema) -> Option<usize> {
    schema.normalize(raw)
}

/// The two sensitive attributes audited by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    Ethnicity,
}

impl Attribute {
    pub const ALL: [Attribute; 2] = [Attribute::Gender, Attribute::Ethnicity];

    pub fn schema(self) -> &'static LabelSchema {
        match self {
            Attribute::Gender => LabelSchema::gender(),
            Attribute::Ethnicity => LabelSchema::region(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Ethnicity => "ethnicity",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match fold(s).as_str() {
            "gender" => Ok(Attribute::Gender),
            "ethnicity" | "region" | "continent" => Ok(Attribute::Ethnicity),
            other => Err(DataError::Schema(format!("unknown attribute `{other}`"))),
        }
    }
}
