//! Bug-report text normalization.
//!
//! The pipeline is: split raw text into alphabetic runs, break camelCase
//! compounds (optionally keeping the compound), Porter-stem, lowercase, then
//! drop stopwords and tokens shorter than the configured minimum.

mod porter;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use porter::stem;

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Settings for [`preprocess_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub stopwords: BTreeSet<String>,
    pub keep_compound_original: bool,
    pub min_token_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            stopwords: default_stopwords(),
            keep_compound_original: true,
            min_token_len: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn with_stopwords<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let config = Self {
            stopwords: words.into_iter().map(Into::into).collect(),
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_token_len == 0 {
            return Err(Error::Config("min_token_len must be at least 1".into()));
        }
        for word in &self.stopwords {
            if word.is_empty() || word.chars().any(char::is_whitespace) || word.chars().any(char::is_uppercase) {
                return Err(Error::Config(format!(
                    "stopword {word:?} must be nonempty, lowercase and whitespace-free"
                )));
            }
        }
        Ok(())
    }

    fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }
}

/// The bundled English stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// Parses stopword text: one word per line, `#` lines are comments.
/// Words are trimmed and lowercased; blank lines are skipped.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

/// Maximal runs of alphabetic characters. Everything else separates tokens
/// and is dropped. Case is preserved.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphabetic())
        .filter(|run| !run.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Splits a camelCase identifier into its parts.
///
/// Boundaries are lowercase→uppercase transitions and the last capital of an
/// uppercase run that is followed by a lowercase letter (`HTMLString` →
/// `HTML`, `String`). With `keep_original`, the unsplit token is emitted first
/// whenever a split happened.
pub fn split_compound(token: &str, keep_original: bool) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let lower_to_upper = prev.is_lowercase() && cur.is_uppercase();
        let acronym_end =
            prev.is_uppercase() && cur.is_uppercase() && chars.get(i + 1).is_some_and(|next| next.is_lowercase());
        if lower_to_upper || acronym_end {
            parts.push(chars[start..i].iter().collect::<String>());
            start = i;
        }
    }
    if start == 0 {
        return vec![token.to_owned()];
    }
    parts.push(chars[start..].iter().collect());
    if keep_original {
        parts.insert(0, token.to_owned());
    }
    parts
}

/// Full report normalization; surviving tokens keep source order.
///
/// A token is dropped when either its lowercased surface form or its stem is
/// a stopword, so both `was` and its stem `wa` are filtered.
pub fn preprocess_report(raw: &str, config: &PreprocessConfig) -> Vec<String> {
    let mut out = Vec::new();
    for token in tokenize(raw) {
        for part in split_compound(&token, config.keep_compound_original) {
            let surface = part.to_lowercase();
            let stemmed = stem(&surface);
            if config.is_stopword(&surface) || config.is_stopword(&stemmed) {
                continue;
            }
            if stemmed.chars().count() < config.min_token_len {
                continue;
            }
            out.push(stemmed);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(stop: &[&str], keep: bool, min: usize) -> PreprocessConfig {
        PreprocessConfig {
            stopwords: stop.iter().map(|s| s.to_string()).collect(),
            keep_compound_original: keep,
            min_token_len: min,
        }
    }

    #[test]
    fn tokenize_drops_digits_and_symbols() {
        assert_eq!(tokenize("NPE in v2.1!"), ["NPE", "in", "v"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("hello"), ["hello"]);
        assert_eq!(tokenize("snake_case_name"), ["snake", "case", "name"]);
    }

    #[test]
    fn split_camel_case() {
        assert_eq!(split_compound("WindowsSize", true), ["WindowsSize", "Windows", "Size"]);
        assert_eq!(split_compound("parse", true), ["parse"]);
        assert_eq!(
            split_compound("toHTMLString", true),
            ["toHTMLString", "to", "HTML", "String"]
        );
        assert_eq!(split_compound("toHTMLString", false), ["to", "HTML", "String"]);
        assert_eq!(split_compound("NPE", true), ["NPE"]);
        assert_eq!(split_compound("getX", true), ["getX", "get", "X"]);
    }

    #[test]
    fn full_pipeline_example() {
        let config = cfg(&["the", "is"], true, 1);
        assert_eq!(
            preprocess_report("The WindowsSize is wrong", &config),
            ["windowss", "window", "size", "wrong"]
        );
    }

    #[test]
    fn empty_and_all_stopwords() {
        assert!(preprocess_report("", &PreprocessConfig::default()).is_empty());
        assert!(preprocess_report("the the the", &cfg(&["the"], true, 1)).is_empty());
    }

    #[test]
    fn split_fragments_are_filtered_too() {
        let config = cfg(&["to"], true, 1);
        assert_eq!(preprocess_report("toString", &config), ["tostr", "string"]);
    }

    #[test]
    fn stem_that_is_a_stopword_is_dropped() {
        // "was" survives as "wa" unless the surface form is also checked
        assert!(preprocess_report("was", &cfg(&["was"], true, 1)).is_empty());
    }

    #[test]
    fn min_token_len_filters() {
        let config = cfg(&[], true, 3);
        assert_eq!(preprocess_report("a be cat", &config), ["cat"]);
    }

    #[test]
    fn default_list_is_valid() {
        let config = PreprocessConfig::default();
        config.validate().unwrap();
        assert!(config.stopwords.len() >= 150);
        assert!(config.stopwords.contains("the"));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(cfg(&[], true, 0).validate().is_err());
        assert!(cfg(&["Bad"], true, 1).validate().is_err());
        assert!(cfg(&["two words"], true, 1).validate().is_err());
        assert!(cfg(&[""], true, 1).validate().is_err());
    }

    #[test]
    fn stopword_file_format() {
        let words = parse_stopwords("# comment\nthe\n\n  And \n#x\n");
        assert_eq!(words.into_iter().collect::<Vec<_>>(), ["and", "the"]);
    }
}
