//! Planted-signal corpus: random pseudo-word essays where each trait label is
//! a fixed function of that trait's marker tokens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EssayRecord, Trait, TraitLabels};
use crate::tensor::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

/// Label rule applied to a trait's marker occurrences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MarkerRule {
    /// Positive iff at least `min` marker tokens occur.
    Count { min: usize },
    /// Positive iff markers occur in at least `min` distinct sentences.
    DistinctSentences { min: usize },
}

impl MarkerRule {
    /// Label from per-sentence marker counts.
    pub fn label(&self, per_sentence: &[usize]) -> bool {
        match *self {
            MarkerRule::Count { min } => per_sentence.iter().sum::<usize>() >= min,
            MarkerRule::DistinctSentences { min } => {
                per_sentence.iter().filter(|&&c| c > 0).count() >= min
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub docs: usize,
    /// Inclusive range of sentences per document.
    pub sentences: (usize, usize),
    /// Inclusive range of filler words per sentence.
    pub words: (usize, usize),
    pub vocab: usize,
    pub markers_per_trait: usize,
    pub rule: MarkerRule,
    /// Chance that a negative document still carries a sub-threshold
    /// number of markers.
    pub near_miss: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            docs: 200,
            sentences: (3, 5),
            words: (4, 7),
            vocab: 100,
            markers_per_trait: 2,
            rule: MarkerRule::Count { min: 2 },
            near_miss: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub spec: SynthSpec,
    pub records: Vec<EssayRecord>,
    pub markers: BTreeMap<Trait, Vec<String>>,
}

fn pseudo_word(rng: &mut RngStream) -> String {
    const ONSETS: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr",
    ];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    let syllables = 2 + rng.below(2);
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}",
                ONSETS[rng.below(ONSETS.len())],
                VOWELS[rng.below(VOWELS.len())]
            )
        })
        .collect()
}

fn unique_words(n: usize, taken: &mut BTreeSet<String>, rng: &mut RngStream) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn in_range(rng: &mut RngStream, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Per-sentence marker placement for one trait and label.
fn plan(
    rule: MarkerRule,
    positive: bool,
    near_miss: f64,
    n_sent: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    let mut counts = vec![0; n_sent];
    let min = match rule {
        MarkerRule::Count { min } | MarkerRule::DistinctSentences { min } => min,
    };
    match (rule, positive) {
        (MarkerRule::Count { .. }, true) => {
            for _ in 0..min + rng.below(3) {
                counts[rng.below(n_sent)] += 1;
            }
        }
        (MarkerRule::Count { .. }, false) => {
            if rng.uniform() < near_miss {
                for _ in 0..1 + rng.below(min - 1) {
                    counts[rng.below(n_sent)] += 1;
                }
            }
        }
        (MarkerRule::DistinctSentences { .. }, true) => {
            let mut order: Vec<usize> = (0..n_sent).collect();
            rng.shuffle(&mut order);
            let k = (min + rng.below(2)).min(n_sent);
            for &j in &order[..k] {
                counts[j] += 1;
            }
        }
        (MarkerRule::DistinctSentences { .. }, false) => {
            if rng.uniform() < near_miss {
                let mut order: Vec<usize> = (0..n_sent).collect();
                rng.shuffle(&mut order);
                for &j in &order[..min - 1] {
                    counts[j] += 1 + rng.below(3);
                }
            }
        }
    }
    counts
}

pub fn make_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus, SynthError> {
    let bad = |m: &str| Err(SynthError::Spec(m.to_string()));
    if spec.docs < 20 {
        return bad("at least 20 documents are required");
    }
    if spec.sentences.0 == 0 || spec.sentences.0 > spec.sentences.1 {
        return bad("sentence range must be non-empty and start at 1 or more");
    }
    if spec.words.0 == 0 || spec.words.0 > spec.words.1 {
        return bad("word range must be non-empty and start at 1 or more");
    }
    if spec.vocab == 0 || spec.markers_per_trait == 0 {
        return bad("vocabulary and marker sets must be non-empty");
    }
    let min = match spec.rule {
        MarkerRule::Count { min } | MarkerRule::DistinctSentences { min } => min,
    };
    if min < 2 {
        return bad("rule threshold must be at least 2");
    }
    if matches!(spec.rule, MarkerRule::DistinctSentences { .. }) && spec.sentences.0 < min + 1 {
        return bad("documents need more sentences than the distinct-sentence threshold");
    }
    if !(0.0..=1.0).contains(&spec.near_miss) {
        return bad("near_miss must be a probability");
    }

    let root = RngStream::new(spec.seed).split(0x5e7);
    let mut words_rng = root.split(0);
    let mut taken = BTreeSet::new();
    let vocab = unique_words(spec.vocab, &mut taken, &mut words_rng);
    let markers: BTreeMap<Trait, Vec<String>> = Trait::ALL
        .iter()
        .map(|&t| {
            (
                t,
                unique_words(spec.markers_per_trait, &mut taken, &mut words_rng),
            )
        })
        .collect();

    // exactly half positive per trait, independently shuffled
    let mut labels = vec![TraitLabels::default(); spec.docs];
    let mut label_rng = root.split(1);
    for t in Trait::ALL {
        let mut flags: Vec<bool> = (0..spec.docs).map(|i| i < spec.docs / 2).collect();
        label_rng.shuffle(&mut flags);
        for (l, f) in labels.iter_mut().zip(flags) {
            l.set(t, f);
        }
    }

    let mut doc_rng = root.split(2);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let n_sent = in_range(&mut doc_rng, spec.sentences);
            let mut sentences: Vec<Vec<String>> = (0..n_sent)
                .map(|_| {
                    let n = in_range(&mut doc_rng, spec.words);
                    (0..n)
                        .map(|_| vocab[doc_rng.below(vocab.len())].clone())
                        .collect()
                })
                .collect();
            for t in Trait::ALL {
                let counts = plan(
                    spec.rule,
                    labels.get(t),
                    spec.near_miss,
                    n_sent,
                    &mut doc_rng,
                );
                for (j, &c) in counts.iter().enumerate() {
                    for _ in 0..c {
                        let m = &markers[&t][doc_rng.below(spec.markers_per_trait)];
                        let at = doc_rng.below(sentences[j].len() + 1);
                        sentences[j].insert(at, m.clone());
                    }
                }
            }
            let text = sentences
                .iter()
                .map(|ws| {
                    let mut s = ws.join(" ");
                    if let Some(first) = s.get_mut(0..1) {
                        first.make_ascii_uppercase();
                    }
                    s + "."
                })
                .collect::<Vec<_>>()
                .join(" ");
            EssayRecord {
                id: format!("synth-{i:04}"),
                text,
                labels,
            }
        })
        .collect();

    Ok(SyntheticCorpus {
        spec: spec.clone(),
        records,
        markers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Recount markers straight from the text.
    fn recount(text: &str, markers: &[String]) -> Vec<usize> {
        text.split('.')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.split_whitespace()
                    .filter(|w| markers.iter().any(|m| m.eq_ignore_ascii_case(w)))
                    .count()
            })
            .collect()
    }

    #[test]
    fn default_corpus_shape_and_balance() {
        let c = make_synthetic_corpus(&SynthSpec::default()).unwrap();
        assert_eq!(c.records.len(), 200);
        for t in Trait::ALL {
            let pos = c.records.iter().filter(|r| r.labels.get(t)).count();
            assert_eq!(pos, 100);
        }
    }

    #[test]
    fn labels_match_independent_recount() {
        for rule in [
            MarkerRule::Count { min: 2 },
            MarkerRule::DistinctSentences { min: 2 },
        ] {
            let spec = SynthSpec {
                rule,
                seed: 4,
                sentences: (4, 7),
                near_miss: 0.5,
                ..SynthSpec::default()
            };
            let c = make_synthetic_corpus(&spec).unwrap();
            for r in &c.records {
                for t in Trait::ALL {
                    let per = recount(&r.text, &c.markers[&t]);
                    let expected = match rule {
                        MarkerRule::Count { min } => per.iter().sum::<usize>() >= min,
                        MarkerRule::DistinctSentences { min } => {
                            per.iter().filter(|&&n| n > 0).count() >= min
                        }
                    };
                    assert_eq!(r.labels.get(t), expected, "{} {t}", r.id);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = make_synthetic_corpus(&SynthSpec::default()).unwrap();
        let b = make_synthetic_corpus(&SynthSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic_corpus(&SynthSpec {
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn rejects_small_specs() {
        assert!(make_synthetic_corpus(&SynthSpec {
            docs: 19,
            ..SynthSpec::default()
        })
        .is_err());
        let one = SynthSpec {
            rule: MarkerRule::Count { min: 1 },
            ..SynthSpec::default()
        };
        assert!(make_synthetic_corpus(&one).is_err());
    }
}
