//! Text normalization, tokenization and n-gram extraction.
//!
//! Every metric and every length rule in the crate runs over [`TokenSeq`]s
//! produced by [`normalize`], so a change to [`NormalizationConfig`] shifts
//! metric values. Reports carry the config they were computed with.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Highest n-gram order used anywhere (BLEU4, SARI).
pub const MAX_NGRAM_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// Unicode canonical composition (NFC).
    pub unicode_normalize: bool,
    /// Split punctuation and symbol characters into standalone tokens.
    pub punctuation_split: bool,
    /// Collapse whitespace runs in the normalized text to a single space.
    ///
    /// Tokens never contain whitespace, so token boundaries are the same
    /// either way; the flag only affects [`normalize_text`].
    pub collapse_whitespace: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            unicode_normalize: true,
            punctuation_split: true,
            collapse_whitespace: true,
        }
    }
}

impl NormalizationConfig {
    /// Whitespace tokenization only.
    pub fn raw() -> Self {
        Self {
            lowercase: false,
            unicode_normalize: false,
            punctuation_split: false,
            collapse_whitespace: false,
        }
    }
}

impl fmt::Display for NormalizationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lowercase={} nfc={} punct_split={} collapse_ws={}",
            self.lowercase, self.unicode_normalize, self.punctuation_split, self.collapse_whitespace
        )
    }
}

/// An ordered sequence of non-empty, whitespace-free tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::argument(format!("invalid token {bad:?}")));
        }
        Ok(Self(tokens))
    }

    /// Splits on whitespace without any other normalization.
    pub fn from_whitespace(text: &str) -> Self {
        Self(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Joins tokens with single spaces.
    pub fn render(&self) -> String {
        self.0.join(" ")
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(seq: TokenSeq) -> Self {
        seq.0
    }
}

impl<'a> FromIterator<&'a str> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        Self(
            iter.into_iter()
                .flat_map(str::split_whitespace)
                .map(str::to_owned)
                .collect(),
        )
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Applies the character-level rules (composition, case folding, whitespace
/// collapse) and returns the normalized text. Punctuation splitting is a
/// token-level rule and is applied by [`normalize`].
pub fn normalize_text(text: &str, cfg: &NormalizationConfig) -> String {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out: String = if cfg.unicode_normalize {
        text.nfc().collect()
    } else {
        text.to_owned()
    };
    if cfg.lowercase {
        out = out.to_lowercase();
        if cfg.unicode_normalize {
            // Some lowercase mappings leave sequences that compose further.
            out = out.nfc().collect();
        }
    }
    if cfg.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    out
}

/// Normalizes `text` and splits it into tokens.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> TokenSeq {
    let text = normalize_text(text, cfg);
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        if !cfg.punctuation_split {
            tokens.push(chunk.to_owned());
            continue;
        }
        let mut word = String::new();
        for c in chunk.chars() {
            if is_word_char(c) {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    TokenSeq(tokens)
}

/// Multiset of the n-token windows of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramProfile<'a> {
    n: usize,
    counts: HashMap<&'a [String], usize>,
}

impl<'a> NGramProfile<'a> {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &HashMap<&'a [String], usize> {
        &self.counts
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Number of distinct n-grams.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Number of windows (sum of all counts).
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Sliding-window n-gram profile, `1 <= n <= 4`.
pub fn ngrams(seq: &TokenSeq, n: usize) -> Result<NGramProfile<'_>> {
    if !(1..=MAX_NGRAM_ORDER).contains(&n) {
        return Err(Error::argument(format!(
            "n-gram order {n} outside 1..={MAX_NGRAM_ORDER}"
        )));
    }
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for window in seq.tokens().windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    Ok(NGramProfile { n, counts })
}
