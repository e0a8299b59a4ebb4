use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use lyrics_audit::data_model::parse_key_values;

use crate::CliError;

/// `key = value` pairs from `--config`. Consulted only when neither the flag
/// nor its environment variable supplied a value.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

pub const KNOWN_KEYS: [&str; 11] = [
    "seed",
    "iterations",
    "stratum_n",
    "alpha",
    "endpoint",
    "model",
    "api_key",
    "concurrency",
    "max_retries",
    "timeout_secs",
    "transcript",
];

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let pairs = parse_key_values(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (k, v) in pairs {
            let key = k.replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{}: unknown key `{k}`", path.display())));
            }
            values.insert(key, v);
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// Flag (or env, which clap already folded into the flag) over config.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str, what: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("{what} is required (flag, environment or config `{key}`)")))
    }
}
