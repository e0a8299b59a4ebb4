#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lyrics_audit::data_model::prediction_json;
use lyrics_audit::response_parser::parse_response;
use lyrics_audit::PromptId;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub struct GoldenCase {
    pub prompt: PromptId,
    pub name: String,
    pub raw: PathBuf,
    pub expected: PathBuf,
}

/// Every `<prompt>/<case>.txt` fixture, sorted.
pub fn golden_cases() -> Vec<GoldenCase> {
    let mut cases = Vec::new();
    for prompt in PromptId::ALL {
        let dir = golden_dir().join(prompt.as_str());
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        names.sort();
        for raw in names {
            cases.push(GoldenCase {
                prompt,
                name: raw.file_stem().unwrap().to_string_lossy().into_owned(),
                expected: raw.with_extension("json"),
                raw,
            });
        }
    }
    cases
}

/// Parse the fixture and compare the JSON line byte-for-byte. With
/// `GOLDEN_BLESS` set, the expected file is rewritten instead.
pub fn check_golden(case: &GoldenCase) -> Result<(), String> {
    let raw = std::fs::read_to_string(&case.raw).map_err(|e| e.to_string())?;
    let record = parse_response("golden-song", "golden-model", case.prompt, &raw, 0.0);
    let actual = prediction_json(&record) + "\n";
    if std::env::var_os("GOLDEN_BLESS").is_some() {
        std::fs::write(&case.expected, &actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&case.expected)
        .map_err(|e| format!("{}: {e}", case.expected.display()))?;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("{}/{}:\n  expected {expected}  actual   {actual}", case.prompt, case.name))
    }
}
