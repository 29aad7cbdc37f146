//! Whole-token coverage of a corpus by a vocabulary.
//!
//! The corpus is split with a rough cleaning policy and each unique token is
//! looked up verbatim; there is no subword fallback.

use std::collections::HashMap;

use super::Vocabulary;
use crate::corpus::Dataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub split_punctuation: bool,
    pub strip_diacritics: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::english()
    }
}

impl Normalizer {
    pub fn english() -> Self {
        Normalizer {
            lowercase: true,
            strip_urls: true,
            strip_mentions: true,
            split_punctuation: true,
            strip_diacritics: false,
        }
    }

    pub fn arabic() -> Self {
        Normalizer {
            lowercase: false,
            ..Normalizer::english()
        }
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            if self.strip_urls && is_url(raw) {
                continue;
            }
            if self.strip_mentions && raw.starts_with('@') {
                continue;
            }
            let mut word: String = if self.strip_diacritics {
                raw.chars().filter(|&c| !is_diacritic(c)).collect()
            } else {
                raw.to_string()
            };
            if self.lowercase {
                word = word.to_lowercase();
            }
            if self.split_punctuation {
                out.extend(
                    word.split(is_punctuation)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string),
                );
            } else if !word.is_empty() {
                out.push(word);
            }
        }
        out
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Arabic harakat, superscript alef and Latin combining marks.
fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{0300}'..='\u{036F}')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{00A1}' | '\u{00AB}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
                | '\u{060C}' | '\u{061B}' | '\u{061F}' | '\u{066A}'..='\u{066D}' | '\u{06D4}'
                | '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3001}' | '\u{3002}'
        )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub corpus_unique_tokens: usize,
    pub overlapping: usize,
    pub fraction: f64,
    /// Missing tokens with their corpus frequency, most frequent first.
    pub sample_missing: Vec<(String, usize)>,
}

pub fn vocab_overlap(
    corpus: &Dataset,
    vocab: &Vocabulary,
    normalizer: &Normalizer,
    sample: usize,
) -> OverlapReport {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for tweet in &corpus.tweets {
        for tok in normalizer.tokens(&tweet.text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let overlapping = counts.keys().filter(|t| vocab.contains(t)).count();
    let mut missing: Vec<(String, usize)> = counts
        .iter()
        .filter(|(t, _)| !vocab.contains(t))
        .map(|(t, &c)| (t.clone(), c))
        .collect();
    missing.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    missing.truncate(sample);
    let unique = counts.len();
    OverlapReport {
        corpus_unique_tokens: unique,
        overlapping,
        fraction: if unique == 0 {
            0.0
        } else {
            overlapping as f64 / unique as f64
        },
        sample_missing: missing,
    }
}
