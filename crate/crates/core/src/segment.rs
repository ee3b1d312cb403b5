//! Text normalization and document → sentence → word decomposition.
//!
//! Sentences end at a token whose last non-closing character is `.`, `!` or
//! `?`, unless the token is a configured abbreviation. Words are whitespace
//! tokens with leading and trailing non-alphanumeric characters stripped;
//! tokens that strip to nothing are dropped, as are sentences left empty.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::EssayRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("document `{0}` is empty after normalization")]
    EmptyDocument(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 1-based position within the document.
    pub index: usize,
    pub text: String,
    pub words: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

impl SegmentedDocument {
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(|s| s.words.len()).sum()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    /// Words in document order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences
            .iter()
            .flat_map(|s| s.words.iter().map(String::as_str))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Lowercase tokens (with their trailing period) that never end a
    /// sentence.
    pub abbreviations: Vec<String>,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        let abbreviations = [
            "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.", "etc.", "e.g.",
            "i.e.", "a.m.", "p.m.", "u.s.", "no.", "approx.", "dept.", "mt.",
        ];
        SegmenterConfig {
            abbreviations: abbreviations.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Unicode NFC, lowercase, whitespace runs collapsed to one space and
/// trimmed. Punctuation and word forms are left alone.
pub fn preprocess(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let renormalized: String = lowered.nfc().collect();
    renormalized
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_closer(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}' | '»'
    )
}

fn ends_sentence(token: &str, cfg: &SegmenterConfig) -> bool {
    let core = token.trim_end_matches(is_closer);
    if !core.ends_with(['.', '!', '?']) {
        return false;
    }
    !cfg.abbreviations.iter().any(|a| a == core)
}

fn strip_word(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

pub fn segment(doc_id: &str, text: &str) -> Result<SegmentedDocument, SegmentError> {
    segment_with(doc_id, text, &SegmenterConfig::default())
}

pub fn segment_with(
    doc_id: &str,
    text: &str,
    cfg: &SegmenterConfig,
) -> Result<SegmentedDocument, SegmentError> {
    let normalized = preprocess(text);
    let mut sentences = Vec::new();
    let mut tokens: Vec<&str> = Vec::new();

    let flush = |tokens: &mut Vec<&str>, sentences: &mut Vec<Sentence>| {
        let words: Vec<String> = tokens
            .iter()
            .map(|t| strip_word(t))
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        if !words.is_empty() {
            sentences.push(Sentence {
                index: sentences.len() + 1,
                text: tokens.join(" "),
                words,
            });
        }
        tokens.clear();
    };

    for token in normalized.split(' ').filter(|t| !t.is_empty()) {
        tokens.push(token);
        if ends_sentence(token, cfg) {
            flush(&mut tokens, &mut sentences);
        }
    }
    flush(&mut tokens, &mut sentences);

    if sentences.is_empty() {
        return Err(SegmentError::EmptyDocument(doc_id.to_string()));
    }
    Ok(SegmentedDocument {
        doc_id: doc_id.to_string(),
        sentences,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub reason: String,
}

/// Segment every record, skipping (and reporting) the ones that fail.
pub fn segment_corpus(
    records: &[EssayRecord],
    cfg: &SegmenterConfig,
) -> (Vec<SegmentedDocument>, SegmentReport) {
    let mut docs = Vec::with_capacity(records.len());
    let mut report = SegmentReport::default();
    for r in records {
        match segment_with(&r.id, &r.text, cfg) {
            Ok(d) => docs.push(d),
            Err(e) => {
                log::warn!("skipping {}: {e}", r.id);
                report.skipped.push(SkippedRecord {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    (docs, report)
}
