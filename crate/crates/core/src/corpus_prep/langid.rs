use std::collections::HashSet;
use std::sync::OnceLock;

use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use super::CorpusError;

pub const MIN_ENGLISH_RATIO: f64 = 0.8;
pub const MAX_OOV_RATIO: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentLanguage {
    English,
    Other,
    /// Not enough signal to decide; excluded from the ratio.
    Undetermined,
}

/// Decides the language of one lyric fragment.
pub trait FragmentClassifier: Sync {
    fn classify(&self, fragment: &str) -> FragmentLanguage;
}

const ENGLISH: &[&str] = &[
    "the", "and", "you", "that", "was", "for", "are", "with", "his", "they", "this", "have", "from",
    "what", "were", "when", "your", "said", "there", "she", "which", "their", "will", "would", "all",
    "been", "has", "more", "her", "him", "into", "could", "some", "them", "then", "than", "only",
    "just", "like", "know", "want", "never", "can't", "don't", "i'm", "it's", "my", "me", "i", "is",
    "it", "of", "to", "in", "we", "be", "on", "so", "oh", "love", "baby", "yeah", "got", "gonna",
    "is", "am", "our", "out", "up", "now", "no", "not", "but", "she's", "he", "go",
];
const SPANISH: &[&str] = &[
    "el", "los", "las", "que", "del", "por", "una", "con", "para", "como", "pero", "más", "mi", "tu",
    "yo", "es", "está", "corazón", "amor", "quiero", "cuando", "todo", "nada", "porque", "eres",
    "sin", "te", "se", "lo", "muy", "también", "aquí", "vida", "siempre", "nunca", "y",
];
const FRENCH: &[&str] = &[
    "le", "les", "des", "est", "une", "dans", "pour", "pas", "qui", "sur", "avec", "je", "tu",
    "il", "elle", "nous", "vous", "mon", "ton", "moi", "toi", "mais", "où", "être", "c'est",
    "j'ai", "suis", "et", "au", "aux", "ce", "cette", "amour", "jamais", "toujours",
];
const GERMAN: &[&str] = &[
    "der", "die", "das", "und", "ist", "nicht", "ich", "du", "sie", "wir", "ihr", "mit", "auf",
    "für", "ein", "eine", "den", "dem", "zu", "mich", "dich", "mein", "dein", "auch", "noch",
    "nur", "wie", "wenn", "liebe", "immer", "kein",
];
const PORTUGUESE: &[&str] = &[
    "não", "uma", "com", "para", "você", "eu", "meu", "minha", "seu", "sua", "mais", "mas",
    "coração", "quero", "tudo", "nada", "sempre", "nunca", "também", "então", "estou", "vou",
    "isso", "ao", "os", "das", "dos",
];
const ITALIAN: &[&str] = &[
    "il", "gli", "della", "che", "non", "sono", "per", "una", "con", "mi", "ti", "io", "tu",
    "lui", "lei", "noi", "voi", "cuore", "amore", "sempre", "mai", "perché", "questo", "quella",
    "anche", "ancora", "più",
];

fn word_tokens(text: &str) -> Vec<String> {
    text.nfc()
        .collect::<String>()
        .to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty() && t.chars().any(char::is_alphabetic))
        .map(String::from)
        .collect()
}

/// Stopword-overlap scoring against small per-language lists. A fragment is
/// English when it has strictly more English stopword hits than hits for
/// any other bundled language; ties and zero hits are undetermined.
pub struct StopwordClassifier {
    english: HashSet<&'static str>,
    others: Vec<HashSet<&'static str>>,
}

impl StopwordClassifier {
    pub fn bundled() -> &'static StopwordClassifier {
        static CLASSIFIER: OnceLock<StopwordClassifier> = OnceLock::new();
        CLASSIFIER.get_or_init(|| StopwordClassifier {
            english: ENGLISH.iter().copied().collect(),
            others: [SPANISH, FRENCH, GERMAN, PORTUGUESE, ITALIAN]
                .iter()
                .map(|l| l.iter().copied().collect())
                .collect(),
        })
    }
}

impl FragmentClassifier for StopwordClassifier {
    fn classify(&self, fragment: &str) -> FragmentLanguage {
        let tokens = word_tokens(fragment);
        let english = tokens.iter().filter(|t| self.english.contains(t.as_str())).count();
        let other = self
            .others
            .iter()
            .map(|set| tokens.iter().filter(|t| set.contains(t.as_str())).count())
            .max()
            .unwrap_or(0);
        match english.cmp(&other) {
            std::cmp::Ordering::Greater => FragmentLanguage::English,
            std::cmp::Ordering::Less => FragmentLanguage::Other,
            std::cmp::Ordering::Equal => FragmentLanguage::Undetermined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanguageVerdict {
    pub english_fragment_ratio: f64,
    pub oov_ratio: f64,
    pub needs_translation: bool,
}

/// The translation rule on its own.
pub fn needs_translation(english_fragment_ratio: f64, oov_ratio: f64) -> bool {
    english_fragment_ratio < MIN_ENGLISH_RATIO || oov_ratio > MAX_OOV_RATIO
}

/// Split on line breaks and sentence-final punctuation.
pub fn fragments(lyrics: &str) -> Vec<&str> {
    lyrics
        .split(['\n', '\r', '.', '!', '?'])
        .map(str::trim)
        .filter(|f| f.chars().any(char::is_alphabetic))
        .collect()
}

/// Language verdict with the bundled stopword classifier.
pub fn detect_language(lyrics: &str, english_vocabulary: &HashSet<String>) -> Result<LanguageVerdict, CorpusError> {
    detect_language_with(lyrics, english_vocabulary, StopwordClassifier::bundled())
}

/// Share of determined fragments classified English, and share of word
/// tokens missing from `english_vocabulary`. With no determined fragments
/// the ratio is 1 and only the OOV check applies.
pub fn detect_language_with(
    lyrics: &str,
    english_vocabulary: &HashSet<String>,
    classifier: &dyn FragmentClassifier,
) -> Result<LanguageVerdict, CorpusError> {
    if lyrics.trim().is_empty() {
        return Err(CorpusError::EmptyLyrics);
    }
    let (mut english, mut determined) = (0usize, 0usize);
    for f in fragments(lyrics) {
        match classifier.classify(f) {
            FragmentLanguage::English => {
                english += 1;
                determined += 1;
            }
            FragmentLanguage::Other => determined += 1,
            FragmentLanguage::Undetermined => {}
        }
    }
    let ratio = if determined == 0 {
        1.0
    } else {
        english as f64 / determined as f64
    };
    let tokens = word_tokens(lyrics);
    let oov = if tokens.is_empty() {
        0.0
    } else {
        tokens.iter().filter(|t| !english_vocabulary.contains(t.as_str())).count() as f64 / tokens.len() as f64
    };
    Ok(LanguageVerdict {
        english_fragment_ratio: ratio,
        oov_ratio: oov,
        needs_translation: needs_translation(ratio, oov),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Fragments starting with `EN` are English, everything else is not.
    struct Marker;

    impl FragmentClassifier for Marker {
        fn classify(&self, fragment: &str) -> FragmentLanguage {
            if fragment.starts_with("EN") {
                FragmentLanguage::English
            } else if fragment.starts_with("UN") {
                FragmentLanguage::Undetermined
            } else {
                FragmentLanguage::Other
            }
        }
    }

    fn vocab(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn all_english_low_oov() {
        // 10 fragments, 50 tokens, one unknown word
        let mut lines: Vec<String> = (0..10).map(|_| "EN w w w w".to_string()).collect();
        lines[0] = "EN w w w zz".into();
        let v = detect_language_with(&lines.join("\n"), &vocab(&["en", "w"]), &Marker).unwrap();
        assert_eq!(v.english_fragment_ratio, 1.0);
        assert!((v.oov_ratio - 0.02).abs() < 1e-12);
        assert!(!v.needs_translation);
    }

    #[test]
    fn seven_of_ten_english() {
        let lines: Vec<&str> = (0..10).map(|i| if i < 7 { "EN w" } else { "XX w" }).collect();
        let v = detect_language_with(&lines.join("\n"), &vocab(&["en", "w", "xx"]), &Marker).unwrap();
        assert!((v.english_fragment_ratio - 0.7).abs() < 1e-12);
        assert!(v.needs_translation);
    }

    #[test]
    fn high_oov_triggers_translation() {
        assert!(needs_translation(0.9, 0.20));
        assert!(!needs_translation(0.8, 0.15));
    }

    #[test]
    fn undetermined_fragments_are_excluded() {
        let v = detect_language_with("EN a\nUN b\nUN c", &vocab(&["en", "a", "b", "c"]), &Marker).unwrap();
        assert_eq!(v.english_fragment_ratio, 1.0);
        let v = detect_language_with("UN a", &vocab(&["a"]), &Marker).unwrap();
        assert_eq!(v.english_fragment_ratio, 1.0);
    }

    #[test]
    fn empty_lyrics_error() {
        assert!(matches!(detect_language(" \n", &HashSet::new()), Err(CorpusError::EmptyLyrics)));
    }

    #[test]
    fn bundled_classifier_on_clear_cases() {
        let c = StopwordClassifier::bundled();
        assert_eq!(c.classify("I know that you want me"), FragmentLanguage::English);
        assert_eq!(c.classify("Yo quiero que tú estés conmigo porque eres mi vida"), FragmentLanguage::Other);
        assert_eq!(c.classify("Ich liebe dich und du bist nicht allein"), FragmentLanguage::Other);
        assert_eq!(c.classify("la la la"), FragmentLanguage::Undetermined);
    }

    #[test]
    fn fragment_split() {
        assert_eq!(fragments("One. Two!\nThree?\n\n..."), vec!["One", "Two", "Three"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rule_over_unit_square(r in 0.0f64..=1.0, o in 0.0f64..=1.0) {
            prop_assert_eq!(needs_translation(r, o), r < 0.8 || o > 0.15);
        }
    }
}
